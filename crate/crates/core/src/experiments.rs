//! The three studies: verification of both formulations on `v_ref`, the
//! front-duration sweep, and the white-noise sensitivity study.
//!
//! Every study returns an [`ExperimentReport`] whose rows come out in a fixed
//! order. Independent solves run on the ambient rayon pool but are collected
//! in index order and never reduced across tasks, so the report does not
//! depend on the thread count.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::activation::ActivationMap;
use crate::bidomain::{BidomainRun, StimulusSite};
use crate::formulations::{
    f1_rhs, f1_rhs_from_run, FormulationError, FormulationSolver, RhsInputs, RhsRecipe,
};
use crate::fronts::{build_vtilde, build_vtilde_rate, FrontShape};
use crate::ionic::{CubicIonic, MsParams, PLATEAU};
use crate::io::format_float;
use crate::mesh::TriMesh;

pub const REPORT_HEADER: &str =
    "study,formulation,recipe,front,eps,noise_case,amplitude,seed,time,metric,value";

/// One report cell. `None` fields are written as empty CSV cells; a `None`
/// time means the row summarises all times.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub study: &'static str,
    pub formulation: String,
    pub recipe: String,
    pub front: String,
    pub eps: Option<f64>,
    pub noise_case: String,
    pub amplitude: Option<f64>,
    pub seed: Option<u64>,
    pub time: Option<f64>,
    pub metric: String,
    pub value: Result<f64, String>,
}

impl ReportRow {
    fn new(study: &'static str, metric: &str, value: Result<f64, String>) -> Self {
        ReportRow {
            study,
            formulation: String::new(),
            recipe: String::new(),
            front: String::new(),
            eps: None,
            noise_case: String::new(),
            amplitude: None,
            seed: None,
            time: None,
            metric: metric.to_string(),
            value,
        }
    }

    fn formulation(mut self, f: &str) -> Self {
        self.formulation = f.to_string();
        self
    }

    fn recipe(mut self, r: &str) -> Self {
        self.recipe = r.to_string();
        self
    }

    fn front(mut self, label: &str, eps: Option<f64>) -> Self {
        self.front = label.to_string();
        self.eps = eps;
        self
    }

    fn at(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(String::new, format_float)
}

impl ExperimentReport {
    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
    }

    /// CSV text with the fixed header. Floats use the shortest representation
    /// that round-trips; failed cells carry `error:` and the message.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let value = match &r.value {
                Ok(v) => format_float(*v),
                Err(e) => format!("error: {}", e.replace([',', '\n', '\r'], ";")),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.study,
                r.formulation,
                r.recipe,
                r.front,
                opt_float(r.eps),
                r.noise_case,
                opt_float(r.amplitude),
                r.seed.map_or_else(String::new, |s| s.to_string()),
                r.time.map_or_else(|| "ALL".to_string(), format_float),
                r.metric,
                value
            );
        }
        out
    }

    /// Rows matching a predicate; convenience for tests and summaries.
    pub fn select<'a>(&'a self, pred: impl Fn(&ReportRow) -> bool + 'a) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| pred(r))
    }

    pub fn value(&self, pred: impl Fn(&ReportRow) -> bool) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| pred(r))
            .and_then(|r| r.value.as_ref().ok().copied())
    }
}

fn max_finite(values: &[Result<f64, String>]) -> Result<f64, String> {
    let mut best = 0.0f64;
    for v in values {
        match v {
            Ok(x) => best = best.max(*x),
            Err(e) => return Err(e.clone()),
        }
    }
    Ok(best)
}

fn stringify<T>(r: Result<T, FormulationError>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Inputs shared by the studies.
pub struct StudyContext<'a> {
    pub run: &'a BidomainRun,
    pub solver: &'a FormulationSolver,
    pub ionic: &'a MsParams,
    pub fit: Option<&'a CubicIonic>,
}

impl StudyContext<'_> {
    fn reference_norm(&self, step: usize) -> f64 {
        self.solver
            .operators()
            .mass_torso
            .l2_norm(&self.run.u[step])
            .unwrap_or(0.0)
    }
}

/// Substitutes `v_ref` in both formulations. The recorded recipe and F2 are
/// evaluated at every step; substituted recipes at the steps where all their
/// snapshots exist and the reference potential is not identically zero.
pub fn verification_study(ctx: &StudyContext<'_>, recipes: &[RhsRecipe]) -> ExperimentReport {
    let run = ctx.run;
    let last = run.num_steps() - 1;
    let mut report = ExperimentReport::default();

    let all_steps: Vec<usize> = (1..=last).collect();
    let active: Vec<usize> = (2..last).filter(|&k| ctx.reference_norm(k) > 0.0).collect();

    for &recipe in recipes {
        let steps = if recipe == RhsRecipe::RECORDED {
            &all_steps
        } else {
            &active
        };
        let errors: Vec<Result<f64, String>> = steps
            .par_iter()
            .map(|&k| {
                stringify((|| {
                    let rhs = f1_rhs_from_run(recipe, run, k, ctx.solver.heart(), ctx.ionic, ctx.fit)?;
                    let sol = ctx.solver.solve_f1(&rhs, Some(recipe))?;
                    ctx.solver.relative_l2_torso(&sol.u, &run.u[k])
                })())
            })
            .collect();
        let name = recipe.to_string();
        for (&k, e) in steps.iter().zip(&errors) {
            report.rows.push(
                ReportRow::new("verify", "rel_l2_torso", e.clone())
                    .formulation("F1")
                    .recipe(&name)
                    .front("v_ref", None)
                    .at(run.times[k]),
            );
        }
        report.rows.push(
            ReportRow::new("verify", "rel_l2_torso_max", max_finite(&errors))
                .formulation("F1")
                .recipe(&name)
                .front("v_ref", None),
        );
    }

    let errors: Vec<Result<f64, String>> = all_steps
        .par_iter()
        .map(|&k| {
            stringify((|| {
                let sol = ctx.solver.solve_f2(&run.v[k])?;
                ctx.solver.relative_l2_torso(&sol.u, &run.u[k])
            })())
        })
        .collect();
    for (&k, e) in all_steps.iter().zip(&errors) {
        report.rows.push(
            ReportRow::new("verify", "rel_l2_torso", e.clone())
                .formulation("F2")
                .front("v_ref", None)
                .at(run.times[k]),
        );
    }
    report.rows.push(
        ReportRow::new("verify", "rel_l2_torso_max", max_finite(&errors))
            .formulation("F2")
            .front("v_ref", None),
    );
    report
}

/// Recipe used for F1 when the voltage is a synthetic front: analytic time
/// derivative plus the fitted cubic.
pub const SWEEP_F1_RECIPE: &str = "analytic+f_int";

/// Time windows of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepWindow {
    /// Space-time metrics integrate over `[0, depol_end]`.
    pub depol_end: f64,
    /// Per-time maxima are taken over `[prop_start, prop_end]`.
    pub prop_start: f64,
    pub prop_end: f64,
}

impl SweepWindow {
    /// `depol_end = min(T, max psi + 2 eps_max)`; the propagation window is
    /// `[min psi, max psi]`.
    pub fn new(psi: &ActivationMap, t_end: f64, eps_max: f64) -> Option<Self> {
        let (lo, hi) = (psi.min()?, psi.max()?);
        Some(SweepWindow {
            depol_end: t_end.min(hi + 2.0 * eps_max),
            prop_start: lo,
            prop_end: hi,
        })
    }
}

/// Per-front results kept alongside the report rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSummary {
    pub label: String,
    pub eps: Option<f64>,
    pub f1_l1_spacetime: Result<f64, String>,
    pub f2_l1_spacetime: Result<f64, String>,
    /// the same metric restricted to `[0, prop_end]`
    pub f2_l1_spacetime_propagation: Result<f64, String>,
    pub f1_l2_max: Result<f64, String>,
    pub f2_l2_max: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub report: ExperimentReport,
    pub fronts: Vec<FrontSummary>,
    pub eps0: Option<f64>,
    pub window: SweepWindow,
}

struct StepMetrics {
    f1_l2: Result<f64, String>,
    f2_l2: Result<f64, String>,
    f1_l1: Result<f64, String>,
    f2_l1: Result<f64, String>,
    /// unnormalised boundary L1 norms of the differences and of the reference
    l1_parts: Result<(f64, f64, f64), String>,
    vtilde_rel: Result<f64, String>,
}

/// F1 right-hand side for a synthetic front `vt` with time derivative
/// `rate`, using the run's stimulus at step `k`.
pub fn front_f1_rhs(
    ctx: &StudyContext<'_>,
    recipe: RhsRecipe,
    vt: &[f64],
    rate: &[f64],
    k: usize,
) -> Result<Vec<f64>, FormulationError> {
    let mut inp = RhsInputs::new(ctx.run.dt, ctx.solver.heart(), ctx.ionic, vt);
    inp.analytic_rate = Some(rate);
    inp.stimulus = Some(&ctx.run.stimulus[k]);
    inp.fit = ctx.fit;
    f1_rhs(recipe, &inp)
}

fn front_step(
    ctx: &StudyContext<'_>,
    shape: &FrontShape,
    psi: &ActivationMap,
    recipe: RhsRecipe,
    k: usize,
) -> StepMetrics {
    let run = ctx.run;
    let t = run.times[k];
    let s = ctx.solver;
    let ops = s.operators();
    let vt = build_vtilde(shape, psi, t);
    let rate = build_vtilde_rate(shape, psi, t);

    let u1 = stringify((|| {
        let rhs = front_f1_rhs(ctx, recipe, &vt, &rate, k)?;
        Ok(s.solve_f1(&rhs, Some(recipe))?.u)
    })());
    let u2 = stringify(s.solve_f2(&vt).map(|p| p.u));

    let l2 = |u: &Result<Vec<f64>, String>| -> Result<f64, String> {
        let u = u.as_ref().map_err(Clone::clone)?;
        stringify(s.relative_l2_torso(u, &run.u[k]))
    };
    let l1 = |u: &Result<Vec<f64>, String>| -> Result<f64, String> {
        let u = u.as_ref().map_err(Clone::clone)?;
        stringify(s.relative_l1_boundary(u, &run.u[k]))
    };
    let l1_parts = (|| -> Result<(f64, f64, f64), String> {
        let a = u1.as_ref().map_err(Clone::clone)?;
        let b = u2.as_ref().map_err(Clone::clone)?;
        let (d1, r) = stringify(s.gauged_difference(a, &run.u[k]))?;
        let (d2, _) = stringify(s.gauged_difference(b, &run.u[k]))?;
        let m = &ops.mass_boundary;
        let n = |x: &[f64]| m.l1_norm(x).map_err(|e| e.to_string());
        Ok((n(&d1)?, n(&d2)?, n(&r)?))
    })();
    let vtilde_rel = (|| -> Result<f64, String> {
        let mh = &ops.mass_heart;
        let d: Vec<f64> = vt.iter().zip(&run.v[k]).map(|(a, b)| a - b).collect();
        let num = mh.l2_norm(&d).map_err(|e| e.to_string())?;
        let den = mh.l2_norm(&run.v[k]).map_err(|e| e.to_string())?;
        Ok(crate::formulations::ratio(num, den))
    })();
    StepMetrics {
        f1_l2: l2(&u1),
        f2_l2: l2(&u2),
        f1_l1: l1(&u1),
        f2_l1: l1(&u2),
        l1_parts,
        vtilde_rel,
    }
}

/// Compares `u1` and `u2` computed from `V(t - psi)` with `u_ref` for each
/// front. `eps0` is the grid point of the Heaviside family with the smallest
/// space-time boundary L1 error of `u2`.
pub fn epsilon_sweep(
    ctx: &StudyContext<'_>,
    psi: &ActivationMap,
    fronts: &[FrontShape],
) -> Result<SweepResult, FormulationError> {
    let run = ctx.run;
    let recipe: RhsRecipe = SWEEP_F1_RECIPE.parse()?;
    let eps_max = fronts
        .iter()
        .filter_map(FrontShape::epsilon)
        .fold(0.0f64, f64::max);
    let t_end = *run.times.last().unwrap_or(&0.0);
    let window = SweepWindow::new(psi, t_end, eps_max).ok_or_else(|| {
        FormulationError::MissingInput {
            recipe: recipe.to_string(),
            input: "an activation map with at least one activated vertex",
        }
    })?;
    let steps: Vec<usize> = (1..run.num_steps())
        .filter(|&k| run.times[k] <= window.depol_end + 1e-9)
        .collect();
    let in_prop = |t: f64| t >= window.prop_start && t <= window.prop_end;

    let mut report = ExperimentReport::default();
    let mut summaries = Vec::new();
    for shape in fronts {
        let label = shape.label();
        let eps = shape.epsilon();
        let metrics: Vec<StepMetrics> = steps
            .par_iter()
            .map(|&k| front_step(ctx, shape, psi, recipe, k))
            .collect();
        let row = |metric: &str, value: Result<f64, String>, f: &str| {
            let r = ReportRow::new("sweep", metric, value).front(label, eps);
            match f {
                "F1" => r.formulation("F1").recipe(SWEEP_F1_RECIPE),
                "F2" => r.formulation("F2"),
                _ => r,
            }
        };
        for (&k, m) in steps.iter().zip(&metrics) {
            let t = run.times[k];
            report.rows.push(row("rel_l2_torso", m.f1_l2.clone(), "F1").at(t));
            report.rows.push(row("rel_l2_torso", m.f2_l2.clone(), "F2").at(t));
            report.rows.push(row("rel_l1_boundary", m.f1_l1.clone(), "F1").at(t));
            report.rows.push(row("rel_l1_boundary", m.f2_l1.clone(), "F2").at(t));
            report.rows.push(row("vtilde_rel_l2_heart", m.vtilde_rel.clone(), "").at(t));
        }
        let spacetime = |which: usize, t_max: f64| -> Result<f64, String> {
            let (mut num, mut den) = (0.0, 0.0);
            for (&k, m) in steps.iter().zip(&metrics) {
                if run.times[k] > t_max + 1e-9 {
                    continue;
                }
                let (d1, d2, r) = m.l1_parts.clone()?;
                num += run.dt * if which == 1 { d1 } else { d2 };
                den += run.dt * r;
            }
            Ok(crate::formulations::ratio(num, den))
        };
        let prop_max = |pick: fn(&StepMetrics) -> &Result<f64, String>| {
            let vals: Vec<Result<f64, String>> = steps
                .iter()
                .zip(&metrics)
                .filter(|(&k, _)| in_prop(run.times[k]))
                .map(|(_, m)| pick(m).clone())
                .collect();
            max_finite(&vals)
        };
        let summary = FrontSummary {
            label: label.to_string(),
            eps,
            f1_l1_spacetime: spacetime(1, window.depol_end),
            f2_l1_spacetime: spacetime(2, window.depol_end),
            f2_l1_spacetime_propagation: spacetime(2, window.prop_end),
            f1_l2_max: prop_max(|m| &m.f1_l2),
            f2_l2_max: prop_max(|m| &m.f2_l2),
        };
        report.rows.push(row("rel_l1_boundary_spacetime", summary.f1_l1_spacetime.clone(), "F1"));
        report.rows.push(row("rel_l1_boundary_spacetime", summary.f2_l1_spacetime.clone(), "F2"));
        report.rows.push(row(
            "rel_l1_boundary_spacetime_propagation",
            summary.f2_l1_spacetime_propagation.clone(),
            "F2",
        ));
        report.rows.push(row("rel_l2_torso_max_propagation", summary.f1_l2_max.clone(), "F1"));
        report.rows.push(row("rel_l2_torso_max_propagation", summary.f2_l2_max.clone(), "F2"));
        summaries.push(summary);
    }

    let eps0 = summaries
        .iter()
        .filter_map(|s| Some((s.eps?, *s.f2_l1_spacetime.as_ref().ok()?)))
        .fold(None, |best: Option<(f64, f64)>, (e, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((e, v)),
        })
        .map(|(e, _)| e);
    let mut meta = |metric: &str, value: f64| {
        report.rows.push(ReportRow::new("sweep", metric, Ok(value)));
    };
    if let Some(e) = eps0 {
        meta("eps0", e);
    }
    meta("window_depol_end", window.depol_end);
    meta("window_prop_start", window.prop_start);
    meta("window_prop_end", window.prop_end);

    Ok(SweepResult {
        report,
        fronts: summaries,
        eps0,
        window,
    })
}

/// How the reference voltage is perturbed in the noise study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseCase {
    /// `v_ref + w(x)`
    VrefPlusW,
    /// `v_eps + w(x)`
    VepsPlusW,
    /// `H_eps(t - psi(x) + w(x))`
    PsiFieldNoise,
    /// `H_eps(t - psi(x) + w0)` with one scalar `w0`
    PsiScalarShift,
}

impl NoiseCase {
    pub const ALL: [NoiseCase; 4] = [
        NoiseCase::VrefPlusW,
        NoiseCase::VepsPlusW,
        NoiseCase::PsiFieldNoise,
        NoiseCase::PsiScalarShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseCase::VrefPlusW => "VREF_PLUS_W",
            NoiseCase::VepsPlusW => "VEPS_PLUS_W",
            NoiseCase::PsiFieldNoise => "PSI_FIELD_NOISE",
            NoiseCase::PsiScalarShift => "PSI_SCALAR_SHIFT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        NoiseCase::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s.trim()))
    }

    fn is_time_valued(self) -> bool {
        matches!(self, NoiseCase::PsiFieldNoise | NoiseCase::PsiScalarShift)
    }
}

/// Seed of realisation `k`: the base seed xor'ed with the realisation index.
pub fn realisation_seed(base_seed: u64, k: u64) -> u64 {
    base_seed ^ k
}

/// One realisation's standard-normal draws: a value per heart vertex (in
/// heart-vertex order), then the scalar shift. All cases reuse the same
/// draws, so they differ only in how the noise enters.
pub fn draw_noise(seed: u64, heart_count: usize) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..heart_count).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z0: f64 = StandardNormal.sample(&mut rng);
    (z, z0)
}

/// Mean front speed `mean(1 / |grad psi|)` over heart triangles whose three
/// vertices are activated and whose centroid lies outside the stimulus disk
/// (the stimulated patch activates almost at once and has no finite speed).
pub fn mean_front_speed(mesh: &TriMesh, psi: &ActivationMap, stim: &StimulusSite) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if tri.region != crate::mesh::Region::Heart {
            continue;
        }
        let c = mesh.centroid(t);
        if (c[0] - stim.center[0]).hypot(c[1] - stim.center[1]) <= stim.radius {
            continue;
        }
        let [a, b, cidx] = tri.vertices;
        let (Some(pa), Some(pb), Some(pc)) = (psi.get(a), psi.get(b), psi.get(cidx)) else {
            continue;
        };
        let v = mesh.vertices();
        let (xa, xb, xc) = (v[a], v[b], v[cidx]);
        let area2 = crate::mesh::doubled_signed_area(xa, xb, xc);
        let gx = (pa * (xb[1] - xc[1]) + pb * (xc[1] - xa[1]) + pc * (xa[1] - xb[1])) / area2;
        let gy = (pa * (xc[0] - xb[0]) + pb * (xa[0] - xc[0]) + pc * (xb[0] - xa[0])) / area2;
        let g = gx.hypot(gy);
        if g > 0.0 {
            sum += 1.0 / g;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStudyParams {
    pub eps: f64,
    pub cases: Vec<NoiseCase>,
    pub amplitudes: Vec<f64>,
    pub n_realisations: usize,
    pub base_seed: u64,
    pub t_eval: f64,
}

impl Default for NoiseStudyParams {
    fn default() -> Self {
        NoiseStudyParams {
            eps: 2.5,
            cases: NoiseCase::ALL.to_vec(),
            amplitudes: vec![0.01, 0.05, 0.10],
            n_realisations: 200,
            base_seed: 42,
            t_eval: 35.0,
        }
    }
}

/// Quartiles with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSummary {
    pub case: NoiseCase,
    pub amplitude: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseResult {
    pub report: ExperimentReport,
    pub summaries: Vec<NoiseSummary>,
    pub delta_t: f64,
    /// noiseless errors of `v_ref` and `v_eps` through F2
    pub noiseless_vref: f64,
    pub noiseless_veps: f64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum NoiseStudyError {
    #[error("need at least 2 realisations, got {0}")]
    TooFewRealisations(usize),
    #[error("noise amplitude must be >= 0, got {0}")]
    NegativeAmplitude(f64),
    #[error("cannot derive the time scale: no activated triangle outside the stimulus")]
    NoFrontSpeed,
    #[error(transparent)]
    Front(#[from] crate::fronts::FrontError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
}

pub fn noise_study(
    ctx: &StudyContext<'_>,
    mesh: &TriMesh,
    psi: &ActivationMap,
    stim: &StimulusSite,
    params: &NoiseStudyParams,
) -> Result<NoiseResult, NoiseStudyError> {
    if params.n_realisations < 2 {
        return Err(NoiseStudyError::TooFewRealisations(params.n_realisations));
    }
    if let Some(&a) = params.amplitudes.iter().find(|a| !(**a >= 0.0)) {
        return Err(NoiseStudyError::NegativeAmplitude(a));
    }
    let run = ctx.run;
    let s = ctx.solver;
    let shape = FrontShape::heaviside(params.eps)?;
    let step = run.step_at(params.t_eval);
    let t = run.times[step];
    let u_ref = &run.u[step];
    let v_ref = &run.v[step];
    let v_eps = build_vtilde(&shape, psi, t);
    let heart = &run.heart_vertices;

    let speed = mean_front_speed(mesh, psi, stim).ok_or(NoiseStudyError::NoFrontSpeed)?;
    let delta_p = 2.0 * stim.radius;
    let delta_t = delta_p / speed;

    let f2_error = |vt: &[f64]| -> Result<f64, FormulationError> {
        let sol = s.solve_f2(vt)?;
        s.relative_l2_torso(&sol.u, u_ref)
    };
    let noiseless_vref = f2_error(v_ref)?;
    let noiseless_veps = f2_error(&v_eps)?;

    let mut report = ExperimentReport::default();
    let mut meta = |metric: &str, value: f64| {
        report.rows.push(ReportRow::new("noise", metric, Ok(value)).at(t));
    };
    meta("delta_p", delta_p);
    meta("front_speed", speed);
    meta("delta_t", delta_t);
    report.rows.push(
        ReportRow::new("noise", "rel_l2_torso", Ok(noiseless_vref))
            .formulation("F2")
            .front("v_ref", None)
            .at(t),
    );
    report.rows.push(
        ReportRow::new("noise", "rel_l2_torso", Ok(noiseless_veps))
            .formulation("F2")
            .front("heaviside", Some(params.eps))
            .at(t),
    );

    let draws: Vec<(Vec<f64>, f64)> = (0..params.n_realisations as u64)
        .into_par_iter()
        .map(|k| draw_noise(realisation_seed(params.base_seed, k), heart.len()))
        .collect();

    let mut summaries = Vec::new();
    for &case in &params.cases {
        for &amp in &params.amplitudes {
            let errors: Vec<Result<f64, String>> = draws
                .par_iter()
                .map(|(z, z0)| {
                    let vt = noisy_field(case, amp, delta_t, &shape, psi, t, v_ref, &v_eps, heart, z, *z0);
                    stringify(f2_error(&vt))
                })
                .collect();
            let front = match case {
                NoiseCase::VrefPlusW => ("v_ref", None),
                _ => ("heaviside", Some(params.eps)),
            };
            for (k, e) in errors.iter().enumerate() {
                let mut r = ReportRow::new("noise", "rel_l2_torso", e.clone())
                    .formulation("F2")
                    .front(front.0, front.1)
                    .at(t);
                r.noise_case = case.name().to_string();
                r.amplitude = Some(amp);
                r.seed = Some(realisation_seed(params.base_seed, k as u64));
                report.rows.push(r);
            }
            let mut ok: Vec<f64> = errors.iter().filter_map(|e| e.as_ref().ok().copied()).collect();
            ok.sort_by(f64::total_cmp);
            let failed = errors.len() - ok.len();
            let (q1, median, q3) = if ok.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (quantile(&ok, 0.25), quantile(&ok, 0.5), quantile(&ok, 0.75))
            };
            for (metric, value) in [
                ("q1", q1),
                ("median", median),
                ("q3", q3),
                ("failed_solves", failed as f64),
            ] {
                let mut r = ReportRow::new("noise", metric, Ok(value))
                    .formulation("F2")
                    .front(front.0, front.1)
                    .at(t);
                r.noise_case = case.name().to_string();
                r.amplitude = Some(amp);
                report.rows.push(r);
            }
            summaries.push(NoiseSummary {
                case,
                amplitude: amp,
                q1,
                median,
                q3,
                failed,
            });
        }
    }
    Ok(NoiseResult {
        report,
        summaries,
        delta_t,
        noiseless_vref,
        noiseless_veps,
    })
}

#[allow(clippy::too_many_arguments)]
fn noisy_field(
    case: NoiseCase,
    amp: f64,
    delta_t: f64,
    shape: &FrontShape,
    psi: &ActivationMap,
    t: f64,
    v_ref: &[f64],
    v_eps: &[f64],
    heart: &[usize],
    z: &[f64],
    z0: f64,
) -> Vec<f64> {
    let scale = if case.is_time_valued() { delta_t } else { PLATEAU };
    let sd = amp * scale;
    let mut out = vec![0.0; v_ref.len()];
    for (j, &i) in heart.iter().enumerate() {
        out[i] = match case {
            NoiseCase::VrefPlusW => v_ref[i] + sd * z[j],
            NoiseCase::VepsPlusW => v_eps[i] + sd * z[j],
            NoiseCase::PsiFieldNoise => psi.get(i).map_or(0.0, |p| shape.eval(t - p + sd * z[j])),
            NoiseCase::PsiScalarShift => psi.get(i).map_or(0.0, |p| shape.eval(t - p + sd * z0)),
        };
    }
    out
}
