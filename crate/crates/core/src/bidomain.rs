//! Bidomain reference solver on the heart/torso mesh.
//!
//! Unknowns per step are the transmembrane voltage `v` on heart vertices and
//! the extracellular potential `u` on all vertices. With `R` the reaction term
//! (ionic current minus stimulus), each step solves the symmetric system
//!
//! ```text
//! (c/dt) M_H v + K_i (v + u) = M_H (hist/dt - R_ext)     on heart vertices
//!        K_i v + (K_i + K_e + K_T) u = 0                  on all vertices
//! ```
//!
//! with `c = 1.5`, `hist = 2 v^{n-1} - 0.5 v^{n-2}` and
//! `R_ext = 2 R^{n-1} - R^{n-2}` (second-order semi-implicit BDF). The first
//! step uses `c = 1`, `hist = v^0`, `R_ext = R^0`. The gate is advanced by
//! second-order Adams-Bashforth (forward Euler on the first step).
//!
//! The system is solved for the increment `v^n - v^{n-1}` rather than `v^n`:
//! the two are algebraically the same, but the increment form avoids the
//! cancellation between `c v^n / dt` and `hist / dt` on the plateau.

use thiserror::Error;

use crate::ionic::{IonicError, MsParams, SmoothPulse};
use crate::mesh::{Region, TriMesh};
use crate::operators::{
    add_stiffness, assemble_stiffness, gauge_zero_mean, pcg, ConductivityMap, CsrMatrix,
    LinearOperator, MassOperator, MassSupport, OperatorError, SolverOptions, StiffnessOperator,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BidomainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ionic(#[from] IonicError),
    #[error("linear solve failed at step {step}: {source}")]
    Solve {
        step: usize,
        #[source]
        source: OperatorError,
    },
    #[error("blow-up at step {step}: max |v| = {max_v}")]
    BlowUp { step: usize, max_v: f64 },
}

/// Disk-shaped stimulation region with a smooth time profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusSite {
    pub center: [f64; 2],
    pub radius: f64,
    pub pulse: SmoothPulse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidomainConfig {
    pub conductivity: ConductivityMap,
    pub ionic: MsParams,
    pub dt: f64,
    pub t_end: f64,
    pub stimulus: StimulusSite,
    pub solver: SolverOptions,
}

impl BidomainConfig {
    pub fn validate(&self, mesh: &TriMesh) -> Result<(), BidomainError> {
        self.conductivity
            .validate()
            .map_err(BidomainError::InvalidConfig)?;
        self.ionic.validate()?;
        self.stimulus.pulse.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(BidomainError::InvalidConfig(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt) {
            return Err(BidomainError::InvalidConfig(format!(
                "T ({}) must be at least dt ({})",
                self.t_end, self.dt
            )));
        }
        if !(self.stimulus.radius > 0.0) {
            return Err(BidomainError::InvalidConfig(format!(
                "stimulus radius must be > 0, got {}",
                self.stimulus.radius
            )));
        }
        if !stimulated_vertices(mesh, &self.stimulus).contains(&true) {
            return Err(BidomainError::InvalidConfig(
                "stimulus site contains no heart vertex".into(),
            ));
        }
        if !(self.solver.tol > 0.0) {
            return Err(BidomainError::InvalidConfig("solver tol must be > 0".into()));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

pub fn stimulated_vertices(mesh: &TriMesh, site: &StimulusSite) -> Vec<bool> {
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            mesh.is_heart_vertex(i)
                && (p[0] - site.center[0]).hypot(p[1] - site.center[1]) <= site.radius
        })
        .collect()
}

/// Stored time series of a bidomain run. Every field is a full nodal vector;
/// heart-only fields are zero on torso-only vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BidomainRun {
    pub dt: f64,
    pub times: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    /// Discrete time derivative plus extrapolated reaction actually used at
    /// each step (zero at step 0).
    pub recorded_rhs: Vec<Vec<f64>>,
    /// The extrapolated reaction part of `recorded_rhs`.
    pub recorded_reaction: Vec<Vec<f64>>,
    /// Stimulus current `s(x, t_n)` evaluated at each step time.
    pub stimulus: Vec<Vec<f64>>,
    pub heart_vertices: Vec<usize>,
}

impl BidomainRun {
    pub fn num_steps(&self) -> usize {
        self.times.len()
    }

    /// Intracellular potential `v + u` on heart vertices (zero elsewhere).
    pub fn intracellular(&self, step: usize) -> Vec<f64> {
        let mut ui = vec![0.0; self.u[step].len()];
        for &i in &self.heart_vertices {
            ui[i] = self.v[step][i] + self.u[step][i];
        }
        ui
    }

    /// Index of the stored step closest to `t`.
    pub fn step_at(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }
}

/// Operators shared by the bidomain solver and the formulations.
#[derive(Debug, Clone)]
pub struct HeartTorsoOperators {
    /// sigma_i on the heart
    pub k_intra: StiffnessOperator,
    /// sigma_e on the heart, sigma_T on the torso
    pub k_extra: StiffnessOperator,
    /// sigma_i + sigma_e on the heart, sigma_T on the torso
    pub k_total: StiffnessOperator,
    pub mass_heart: MassOperator,
    pub mass_torso: MassOperator,
    pub mass_all: MassOperator,
    pub mass_boundary: MassOperator,
}

impl HeartTorsoOperators {
    pub fn new(mesh: &TriMesh, cond: &ConductivityMap) -> Result<Self, OperatorError> {
        let k_intra = assemble_stiffness(mesh, &[(Region::Heart, cond.sigma_i)])?;
        let k_extra = assemble_stiffness(
            mesh,
            &[(Region::Heart, cond.sigma_e), (Region::Torso, cond.sigma_t)],
        )?;
        let k_total = add_stiffness(&k_intra, &k_extra);
        Ok(HeartTorsoOperators {
            k_intra,
            k_extra,
            k_total,
            mass_heart: MassOperator::new(mesh, MassSupport::Region(Region::Heart)),
            mass_torso: MassOperator::new(mesh, MassSupport::Region(Region::Torso)),
            mass_all: MassOperator::new(mesh, MassSupport::All),
            mass_boundary: MassOperator::new(
                mesh,
                MassSupport::Boundary(crate::mesh::BoundaryTag::TorsoOuter),
            ),
        })
    }
}

/// Block operator `[c M_H + K_i, K_i; K_i, K_i + K_eT]` on `(v, u)`, acting
/// as the identity on the `v` entries of torso-only vertices.
struct CoupledOperator<'a> {
    k_intra: &'a CsrMatrix,
    k_extra: &'a CsrMatrix,
    mass_heart: &'a [f64],
    heart: &'a [bool],
    shift: f64,
    n: usize,
}

impl LinearOperator for CoupledOperator<'_> {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let (v, u) = x.split_at(n);
        let (yv, yu) = y.split_at_mut(n);
        // yv doubles as scratch for v + u
        for i in 0..n {
            yv[i] = v[i] + u[i];
        }
        self.k_extra.mul_vec_into(u, yu);
        let mut kw = vec![0.0; n];
        self.k_intra.mul_vec_into(yv, &mut kw);
        for i in 0..n {
            yu[i] += kw[i];
            yv[i] = if self.heart[i] {
                self.shift * self.mass_heart[i] * v[i] + kw[i]
            } else {
                v[i]
            };
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let ki = self.k_intra.diagonal();
        let ke = self.k_extra.diagonal();
        let mut d = Vec::with_capacity(2 * self.n);
        for i in 0..self.n {
            d.push(if self.heart[i] {
                self.shift * self.mass_heart[i] + ki[i]
            } else {
                1.0
            });
        }
        for i in 0..self.n {
            d.push(ki[i] + ke[i]);
        }
        d
    }
}

pub fn run_bidomain(mesh: &TriMesh, cfg: &BidomainConfig) -> Result<BidomainRun, BidomainError> {
    cfg.validate(mesh)?;
    let ops = HeartTorsoOperators::new(mesh, &cfg.conductivity)
        .map_err(|e| BidomainError::InvalidConfig(e.to_string()))?;
    run_bidomain_with(mesh, cfg, &ops)
}

pub fn run_bidomain_with(
    mesh: &TriMesh,
    cfg: &BidomainConfig,
    ops: &HeartTorsoOperators,
) -> Result<BidomainRun, BidomainError> {
    cfg.validate(mesh)?;
    let n = mesh.num_vertices();
    let dt = cfg.dt;
    let steps = cfg.num_steps();
    let heart = mesh.heart_mask().to_vec();
    let heart_vertices = mesh.heart_vertices();
    let stim_mask = stimulated_vertices(mesh, &cfg.stimulus);
    let p = cfg.ionic;

    let reaction = |v: &[f64], h: &[f64], stim: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for &i in &heart_vertices {
            let (dv, _) = crate::ionic::ms_rhs(v[i], h[i], &p);
            r[i] = -dv - stim[i];
        }
        r
    };
    let gate_rate = |v: &[f64], h: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n];
        for &i in &heart_vertices {
            g[i] = crate::ionic::ms_rhs(v[i], h[i], &p).1;
        }
        g
    };
    let stimulus_at = |t: f64| -> Vec<f64> {
        let s = cfg.stimulus.pulse.value(t);
        stim_mask.iter().map(|&m| if m { s } else { 0.0 }).collect()
    };

    let mut h0 = vec![0.0; n];
    for &i in &heart_vertices {
        h0[i] = 1.0;
    }
    let mut run = BidomainRun {
        dt,
        times: vec![0.0],
        v: vec![vec![0.0; n]],
        u: vec![vec![0.0; n]],
        h: vec![h0],
        recorded_rhs: vec![vec![0.0; n]],
        recorded_reaction: vec![vec![0.0; n]],
        stimulus: vec![stimulus_at(0.0)],
        heart_vertices: heart_vertices.clone(),
    };
    let mut reactions = vec![reaction(&run.v[0], &run.h[0], &run.stimulus[0])];
    let mut gates = vec![gate_rate(&run.v[0], &run.h[0])];
    let max_iter = cfg.solver.max_iter_factor * 2 * n;

    for step in 1..=steps {
        let t = step as f64 * dt;
        let first = step == 1;
        let shift = if first { 1.0 } else { 1.5 };
        let v1 = &run.v[step - 1];
        let r1 = &reactions[step - 1];
        // increment form: unknowns (w, u) with w = v^n - v^{n-1}, so the
        // right-hand side stays small once the tissue sits on the plateau
        let mut g = vec![0.0; n];
        let mut r_ext = vec![0.0; n];
        for &i in &heart_vertices {
            if first {
                r_ext[i] = r1[i];
            } else {
                let v2 = &run.v[step - 2];
                let r2 = &reactions[step - 2];
                g[i] = 0.5 * (v1[i] - v2[i]);
                r_ext[i] = 2.0 * r1[i] - r2[i];
            }
        }

        let kv1 = ops.k_intra.apply(v1);
        let mut b = vec![0.0; 2 * n];
        for &i in &heart_vertices {
            b[i] = ops.mass_heart.diag()[i] * (g[i] / dt - r_ext[i]) - kv1[i];
        }
        let kv1_mean = kv1.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            b[n + i] = kv1_mean - kv1[i];
        }
        let mut x0 = vec![0.0; 2 * n];
        if !first {
            for &i in &heart_vertices {
                x0[i] = v1[i] - run.v[step - 2][i];
            }
        }
        x0[n..].copy_from_slice(&run.u[step - 1]);

        let op = CoupledOperator {
            k_intra: ops.k_intra.matrix(),
            k_extra: ops.k_extra.matrix(),
            mass_heart: ops.mass_heart.diag(),
            heart: &heart,
            shift: shift / dt,
            n,
        };
        let mut null_mask = vec![false; 2 * n];
        null_mask[n..].iter_mut().for_each(|m| *m = true);
        let (x, _) = pcg(&op, &b, Some(&x0), Some(&null_mask), cfg.solver.tol, max_iter)
            .map_err(|source| BidomainError::Solve { step, source })?;

        let mut v = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for &i in &heart_vertices {
            let w = x[i];
            v[i] = v1[i] + w;
            // equals (1.5 v^n - 2 v^{n-1} + 0.5 v^{n-2}) / dt + R_ext
            rhs[i] = (shift * w - g[i]) / dt + r_ext[i];
        }
        let mut u = x[n..].to_vec();
        gauge_zero_mean(&ops.mass_all, &mut u);

        let max_v = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(max_v <= 10.0) {
            return Err(BidomainError::BlowUp { step, max_v });
        }

        let g1 = &gates[step - 1];
        let h1 = &run.h[step - 1];
        let mut h = vec![0.0; n];
        for &i in &heart_vertices {
            let rate = if first {
                g1[i]
            } else {
                1.5 * g1[i] - 0.5 * gates[step - 2][i]
            };
            h[i] = (h1[i] + dt * rate).clamp(0.0, 1.0);
        }

        let stim = stimulus_at(t);
        reactions.push(reaction(&v, &h, &stim));
        gates.push(gate_rate(&v, &h));
        run.times.push(t);
        run.v.push(v);
        run.u.push(u);
        run.h.push(h);
        run.recorded_rhs.push(rhs);
        run.recorded_reaction.push(r_ext);
        run.stimulus.push(stim);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_in_disk;

    fn small_config(amplitude: f64) -> BidomainConfig {
        BidomainConfig {
            conductivity: ConductivityMap::default(),
            ionic: MsParams::default(),
            dt: 0.1,
            t_end: 3.0,
            stimulus: StimulusSite {
                center: [0.5, 0.0],
                radius: 0.4,
                pulse: SmoothPulse {
                    amplitude,
                    t0: 1.0,
                    half_width: 0.8,
                },
            },
            solver: SolverOptions::default(),
        }
    }

    #[test]
    fn rest_state_is_preserved() {
        let mesh = generate_disk_in_disk(1.0, 2.0, 4, 16).unwrap();
        let run = run_bidomain(&mesh, &small_config(0.0)).unwrap();
        assert_eq!(run.num_steps(), 31);
        for k in 0..run.num_steps() {
            assert!(run.v[k].iter().all(|&x| x == 0.0));
            assert!(run.u[k].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn gauge_and_conservation_hold_each_step() {
        let mesh = generate_disk_in_disk(1.0, 2.0, 6, 24).unwrap();
        let cfg = small_config(2.0);
        let run = run_bidomain(&mesh, &cfg).unwrap();
        let ops = HeartTorsoOperators::new(&mesh, &cfg.conductivity).unwrap();
        for k in 1..run.num_steps() {
            let u = &run.u[k];
            let norm = ops.mass_all.l2_norm(u).unwrap();
            assert!(ops.mass_all.mean(u).abs() <= 1e-12 * norm.max(1e-300));
            let source: f64 = ops.mass_heart.apply(&run.recorded_rhs[k]).iter().sum();
            let scale: f64 = ops
                .mass_heart
                .apply(&run.recorded_rhs[k])
                .iter()
                .map(|x| x.abs())
                .sum();
            assert!(source.abs() <= 1e-9 * scale.max(1e-300), "step {k}: {source} vs {scale}");
            assert!(run.h[k].iter().all(|&g| (0.0..=1.0).contains(&g)));
        }
        assert!(run.v.iter().flatten().any(|&x| x > 0.1));
    }

    #[test]
    fn rejects_stimulus_outside_heart() {
        let mesh = generate_disk_in_disk(1.0, 2.0, 4, 16).unwrap();
        let mut cfg = small_config(1.0);
        cfg.stimulus.center = [1.8, 0.0];
        cfg.stimulus.radius = 0.1;
        let r = run_bidomain(&mesh, &cfg);
        assert!(matches!(r, Err(BidomainError::InvalidConfig(_))), "{r:?}");
    }
}
