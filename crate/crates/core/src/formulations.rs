//! The two static maps from a transmembrane voltage to the extracardiac
//! potential.
//!
//! * Source formulation (F1): `K_{e|T} u = M_H (dv/dt + f(v))`, with the
//!   right-hand side assembled by a swappable [`RhsRecipe`].
//! * Balance formulation (F2): `K_{i+e|T} u = -K_i v`.
//!
//! Here `f` is the reaction term of the bidomain solver, i.e. the ionic
//! current `-f_MS(v, h)` minus the applied stimulus.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bidomain::{BidomainRun, HeartTorsoOperators};
use crate::ionic::{f_ms_reduced, fit_cubic_ionic, ms_rhs, CubicIonic, IonicError, MsParams};
use crate::operators::{gauge_zero_mean, solve_neumann, OperatorError, SolveStats, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulationError {
    #[error("recipe {recipe} needs {input}")]
    MissingInput {
        recipe: String,
        input: &'static str,
    },
    #[error("unknown recipe {0:?}")]
    UnknownRecipe(String),
    #[error("field has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("step {step} out of range for a run of {steps} steps")]
    StepOutOfRange { step: usize, steps: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Ionic(#[from] IonicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DerivativeScheme {
    Analytic,
    Sbdf2,
    EulerCentered,
    EulerExplicit,
    Recorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IonicChoice {
    Recorded,
    FInt,
    FMsWithH,
    FMsReduced,
}

impl DerivativeScheme {
    pub const ALL: [DerivativeScheme; 5] = [
        DerivativeScheme::Analytic,
        DerivativeScheme::Sbdf2,
        DerivativeScheme::EulerCentered,
        DerivativeScheme::EulerExplicit,
        DerivativeScheme::Recorded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DerivativeScheme::Analytic => "analytic",
            DerivativeScheme::Sbdf2 => "sbdf2",
            DerivativeScheme::EulerCentered => "euler_centered",
            DerivativeScheme::EulerExplicit => "euler_explicit",
            DerivativeScheme::Recorded => "recorded",
        }
    }
}

impl IonicChoice {
    pub const ALL: [IonicChoice; 4] = [
        IonicChoice::Recorded,
        IonicChoice::FInt,
        IonicChoice::FMsWithH,
        IonicChoice::FMsReduced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IonicChoice::Recorded => "recorded",
            IonicChoice::FInt => "f_int",
            IonicChoice::FMsWithH => "f_ms_h",
            IonicChoice::FMsReduced => "f_ms_reduced",
        }
    }
}

/// How the F1 source `dv/dt + f(v)` is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RhsRecipe {
    pub derivative: DerivativeScheme,
    pub ionic: IonicChoice,
}

impl RhsRecipe {
    pub const RECORDED: RhsRecipe = RhsRecipe {
        derivative: DerivativeScheme::Recorded,
        ionic: IonicChoice::Recorded,
    };

    pub fn new(derivative: DerivativeScheme, ionic: IonicChoice) -> Self {
        RhsRecipe { derivative, ionic }
    }

    /// Recipes run by the verification study: the recorded identity, then
    /// one substitution at a time.
    pub fn verification_set() -> Vec<RhsRecipe> {
        use DerivativeScheme as D;
        use IonicChoice as I;
        vec![
            RhsRecipe::RECORDED,
            RhsRecipe::new(D::Sbdf2, I::Recorded),
            RhsRecipe::new(D::Sbdf2, I::FInt),
            RhsRecipe::new(D::Sbdf2, I::FMsWithH),
            RhsRecipe::new(D::Sbdf2, I::FMsReduced),
            RhsRecipe::new(D::EulerCentered, I::Recorded),
            RhsRecipe::new(D::EulerExplicit, I::Recorded),
        ]
    }

    pub fn needs_fit(self) -> bool {
        self.ionic == IonicChoice::FInt
    }
}

impl fmt::Display for RhsRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == RhsRecipe::RECORDED {
            f.write_str("recorded")
        } else {
            write!(f, "{}+{}", self.derivative.name(), self.ionic.name())
        }
    }
}

impl FromStr for RhsRecipe {
    type Err = FormulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "recorded" {
            return Ok(RhsRecipe::RECORDED);
        }
        let unknown = || FormulationError::UnknownRecipe(s.to_string());
        let (d, i) = s.split_once('+').ok_or_else(unknown)?;
        let derivative = DerivativeScheme::ALL
            .into_iter()
            .find(|x| x.name() == d)
            .ok_or_else(unknown)?;
        let ionic = IonicChoice::ALL
            .into_iter()
            .find(|x| x.name() == i)
            .ok_or_else(unknown)?;
        Ok(RhsRecipe { derivative, ionic })
    }
}

/// Data available for assembling an F1 source at time level `n`. All fields
/// are full nodal vectors; only heart entries are read.
#[derive(Debug, Clone, Copy)]
pub struct RhsInputs<'a> {
    pub dt: f64,
    pub heart: &'a [bool],
    pub ionic: &'a MsParams,
    pub v_now: &'a [f64],
    pub v_prev: Option<&'a [f64]>,
    pub v_prev2: Option<&'a [f64]>,
    pub v_next: Option<&'a [f64]>,
    pub h_now: Option<&'a [f64]>,
    pub analytic_rate: Option<&'a [f64]>,
    pub recorded_rhs: Option<&'a [f64]>,
    pub recorded_reaction: Option<&'a [f64]>,
    /// Applied stimulus at `t_n`, subtracted from every non-recorded ionic term.
    pub stimulus: Option<&'a [f64]>,
    pub fit: Option<&'a CubicIonic>,
}

impl<'a> RhsInputs<'a> {
    pub fn new(dt: f64, heart: &'a [bool], ionic: &'a MsParams, v_now: &'a [f64]) -> Self {
        RhsInputs {
            dt,
            heart,
            ionic,
            v_now,
            v_prev: None,
            v_prev2: None,
            v_next: None,
            h_now: None,
            analytic_rate: None,
            recorded_rhs: None,
            recorded_reaction: None,
            stimulus: None,
            fit: None,
        }
    }
}

/// Nodal F1 source `dv/dt + f(v)` on heart vertices (zero elsewhere).
pub fn f1_rhs(recipe: RhsRecipe, inp: &RhsInputs<'_>) -> Result<Vec<f64>, FormulationError> {
    let n = inp.v_now.len();
    let missing = |input| FormulationError::MissingInput {
        recipe: recipe.to_string(),
        input,
    };
    let check = |f: Option<&[f64]>, input: &'static str| -> Result<Vec<f64>, FormulationError> {
        let f = f.ok_or_else(|| missing(input))?;
        if f.len() != n {
            return Err(FormulationError::LengthMismatch {
                expected: n,
                found: f.len(),
            });
        }
        Ok(f.to_vec())
    };
    if inp.heart.len() != n {
        return Err(FormulationError::LengthMismatch {
            expected: n,
            found: inp.heart.len(),
        });
    }

    // the fully recorded recipe is the stored value itself, untouched
    if recipe == RhsRecipe::RECORDED {
        let mut out = check(inp.recorded_rhs, "recorded_rhs")?;
        mask(&mut out, inp.heart);
        return Ok(out);
    }

    let v = inp.v_now;
    let dt = inp.dt;
    let mut rate = match recipe.derivative {
        DerivativeScheme::Analytic => check(inp.analytic_rate, "an analytic time derivative")?,
        DerivativeScheme::Sbdf2 => {
            let p1 = check(inp.v_prev, "v at step n-1")?;
            let p2 = check(inp.v_prev2, "v at step n-2")?;
            (0..n)
                .map(|i| (1.5 * v[i] - 2.0 * p1[i] + 0.5 * p2[i]) / dt)
                .collect()
        }
        DerivativeScheme::EulerCentered => {
            let p1 = check(inp.v_prev, "v at step n-1")?;
            let nx = check(inp.v_next, "v at step n+1")?;
            (0..n).map(|i| (nx[i] - p1[i]) / (2.0 * dt)).collect()
        }
        DerivativeScheme::EulerExplicit => {
            let p1 = check(inp.v_prev, "v at step n-1")?;
            (0..n).map(|i| (v[i] - p1[i]) / dt).collect()
        }
        DerivativeScheme::Recorded => {
            let rhs = check(inp.recorded_rhs, "recorded_rhs")?;
            let reaction = check(inp.recorded_reaction, "recorded reaction")?;
            (0..n).map(|i| rhs[i] - reaction[i]).collect()
        }
    };

    let ionic: Vec<f64> = match recipe.ionic {
        IonicChoice::Recorded => check(inp.recorded_reaction, "recorded reaction")?,
        choice => {
            let stim = match inp.stimulus {
                Some(_) => check(inp.stimulus, "stimulus")?,
                None => vec![0.0; n],
            };
            let current: Vec<f64> = match choice {
                IonicChoice::FInt => {
                    let fit = inp.fit.ok_or_else(|| missing("a fitted cubic"))?;
                    v.iter().map(|&x| fit.eval(x)).collect()
                }
                IonicChoice::FMsWithH => {
                    let h = check(inp.h_now, "the gate h at step n")?;
                    (0..n).map(|i| -ms_rhs(v[i], h[i], inp.ionic).0).collect()
                }
                IonicChoice::FMsReduced => v.iter().map(|&x| -f_ms_reduced(x, inp.ionic)).collect(),
                IonicChoice::Recorded => unreachable!(),
            };
            current.iter().zip(&stim).map(|(c, s)| c - s).collect()
        }
    };
    for (r, f) in rate.iter_mut().zip(&ionic) {
        *r += f;
    }
    mask(&mut rate, inp.heart);
    Ok(rate)
}

fn mask(x: &mut [f64], heart: &[bool]) {
    for (xi, &h) in x.iter_mut().zip(heart) {
        if !h {
            *xi = 0.0;
        }
    }
}

/// F1 source at a stored step of a bidomain run, with `v_ref` snapshots.
pub fn f1_rhs_from_run(
    recipe: RhsRecipe,
    run: &BidomainRun,
    step: usize,
    heart: &[bool],
    ionic: &MsParams,
    fit: Option<&CubicIonic>,
) -> Result<Vec<f64>, FormulationError> {
    let steps = run.num_steps();
    if step >= steps {
        return Err(FormulationError::StepOutOfRange { step, steps });
    }
    let mut inp = RhsInputs::new(run.dt, heart, ionic, &run.v[step]);
    inp.v_prev = step.checked_sub(1).map(|k| run.v[k].as_slice());
    inp.v_prev2 = step.checked_sub(2).map(|k| run.v[k].as_slice());
    inp.v_next = run.v.get(step + 1).map(Vec::as_slice);
    inp.h_now = Some(&run.h[step]);
    inp.recorded_rhs = Some(&run.recorded_rhs[step]);
    inp.recorded_reaction = Some(&run.recorded_reaction[step]);
    inp.stimulus = Some(&run.stimulus[step]);
    inp.fit = fit;
    f1_rhs(recipe, &inp)
}

/// Upstroke band used when sampling the bidomain ionic term for the fit.
pub const FIT_BAND: (f64, f64) = (0.1, 0.9);

/// Fits the constrained cubic to `(v, -f_MS(v, h))` samples taken during the
/// upstroke at `n_points` heart vertices drawn with `seed`.
pub fn fit_f_int(
    run: &BidomainRun,
    ionic: &MsParams,
    n_points: usize,
    seed: u64,
) -> Result<CubicIonic, FormulationError> {
    let heart = &run.heart_vertices;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, heart.len(), n_points.min(heart.len())).into_vec();
    picked.sort_unstable();
    let mut samples = Vec::new();
    for idx in picked {
        let i = heart[idx];
        let pts: Vec<(f64, f64)> = (1..run.num_steps())
            .filter(|&k| {
                let v = run.v[k][i];
                v >= FIT_BAND.0 && v <= FIT_BAND.1 && v > run.v[k - 1][i]
            })
            .map(|k| {
                let (v, h) = (run.v[k][i], run.h[k][i]);
                (v, -ms_rhs(v, h, ionic).0)
            })
            .collect();
        // points that never depolarise within the run carry no information
        if pts.len() >= 4 {
            samples.push(pts);
        }
    }
    Ok(fit_cubic_ionic(&samples)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    F1,
    F2,
}

impl Formulation {
    pub fn label(self) -> &'static str {
        match self {
            Formulation::F1 => "F1",
            Formulation::F2 => "F2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution {
    pub u: Vec<f64>,
    pub formulation: Formulation,
    pub recipe: Option<RhsRecipe>,
    pub stats: SolveStats,
}

/// Assembled operators for repeated F1/F2 solves on one mesh.
#[derive(Debug, Clone)]
pub struct FormulationSolver {
    ops: HeartTorsoOperators,
    heart: Vec<bool>,
    opts: SolverOptions,
}

impl FormulationSolver {
    pub fn new(ops: HeartTorsoOperators, heart: Vec<bool>, opts: SolverOptions) -> Self {
        FormulationSolver { ops, heart, opts }
    }

    pub fn operators(&self) -> &HeartTorsoOperators {
        &self.ops
    }

    pub fn heart(&self) -> &[bool] {
        &self.heart
    }

    /// F1 with a heart-supported nodal source. The source is first made
    /// compatible by removing its heart mean.
    pub fn solve_f1(
        &self,
        rhs_heart: &[f64],
        recipe: Option<RhsRecipe>,
    ) -> Result<PotentialSolution, FormulationError> {
        let n = self.heart.len();
        if rhs_heart.len() != n {
            return Err(FormulationError::LengthMismatch {
                expected: n,
                found: rhs_heart.len(),
            });
        }
        let mh = &self.ops.mass_heart;
        let mut b = mh.apply(rhs_heart);
        if self.opts.enforce_compat {
            let c = b.iter().sum::<f64>() / mh.measure();
            for (bi, m) in b.iter_mut().zip(mh.diag()) {
                *bi -= c * m;
            }
        }
        let (u, stats) = solve_neumann(&self.ops.k_extra, &self.ops.mass_all, &b, &self.opts, None)?;
        Ok(PotentialSolution {
            u,
            formulation: Formulation::F1,
            recipe,
            stats,
        })
    }

    pub fn solve_f2(&self, vtilde: &[f64]) -> Result<PotentialSolution, FormulationError> {
        let n = self.heart.len();
        if vtilde.len() != n {
            return Err(FormulationError::LengthMismatch {
                expected: n,
                found: vtilde.len(),
            });
        }
        let mut v = vtilde.to_vec();
        mask(&mut v, &self.heart);
        let mut b = self.ops.k_intra.apply(&v);
        b.iter_mut().for_each(|x| *x = -*x);
        let (u, stats) = solve_neumann(&self.ops.k_total, &self.ops.mass_all, &b, &self.opts, None)?;
        Ok(PotentialSolution {
            u,
            formulation: Formulation::F2,
            recipe: None,
            stats,
        })
    }

    /// Relative `L2(torso)` difference after putting both fields in the
    /// zero-mean gauge. A zero reference gives 0 when `u` is zero too and
    /// infinity otherwise.
    pub fn relative_l2_torso(&self, u: &[f64], reference: &[f64]) -> Result<f64, FormulationError> {
        let (d, r) = self.gauged_difference(u, reference)?;
        let m = &self.ops.mass_torso;
        Ok(ratio(m.l2_norm(&d)?, m.l2_norm(&r)?))
    }

    /// Relative `L1` difference on the outer torso boundary.
    pub fn relative_l1_boundary(
        &self,
        u: &[f64],
        reference: &[f64],
    ) -> Result<f64, FormulationError> {
        let (d, r) = self.gauged_difference(u, reference)?;
        let m = &self.ops.mass_boundary;
        Ok(ratio(m.l1_norm(&d)?, m.l1_norm(&r)?))
    }

    /// Returns `(gauge(u) - gauge(reference), gauge(reference))`.
    pub fn gauged_difference(
        &self,
        u: &[f64],
        reference: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), FormulationError> {
        let n = self.heart.len();
        for f in [u, reference] {
            if f.len() != n {
                return Err(FormulationError::LengthMismatch {
                    expected: n,
                    found: f.len(),
                });
            }
        }
        let mut a = u.to_vec();
        let mut r = reference.to_vec();
        gauge_zero_mean(&self.ops.mass_all, &mut a);
        gauge_zero_mean(&self.ops.mass_all, &mut r);
        let d = a.iter().zip(&r).map(|(x, y)| x - y).collect();
        Ok((d, r))
    }
}

pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}
