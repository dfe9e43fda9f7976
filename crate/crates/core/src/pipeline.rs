//! Glue from a configuration (or a saved run) to the inputs the studies
//! need: mesh, reference run, activation map, operators and the fitted
//! cubic ionic term.

use thiserror::Error;

use crate::activation::{compute_activation, ActivationError, ActivationMap, DEFAULT_THRESHOLD};
use crate::bidomain::{run_bidomain_with, BidomainError, BidomainRun, HeartTorsoOperators};
use crate::config::{FrontSetupError, RunConfig};
use crate::experiments::StudyContext;
use crate::formulations::{fit_f_int, FormulationError, FormulationSolver};
use crate::fronts::{FrontError, FrontShape};
use crate::ionic::CubicIonic;
use crate::mesh::{MeshError, TriMesh};
use crate::operators::OperatorError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("operators: {0}")]
    Operator(#[from] OperatorError),
    #[error("bidomain: {0}")]
    Bidomain(#[from] BidomainError),
    #[error("activation: {0}")]
    Activation(#[from] ActivationError),
    #[error("ionic fit: {0}")]
    Fit(#[source] FormulationError),
    #[error("front: {0}")]
    Front(#[from] FrontSetupError),
}

impl From<FrontError> for PipelineError {
    fn from(e: FrontError) -> Self {
        PipelineError::Front(e.into())
    }
}

/// Builds the mesh and runs the reference bidomain model.
pub fn simulate(config: &RunConfig) -> Result<(TriMesh, BidomainRun), PipelineError> {
    let mesh = config.build_mesh()?;
    let bcfg = config.bidomain();
    bcfg.validate(&mesh)?;
    let ops = HeartTorsoOperators::new(&mesh, &config.conductivity)?;
    let run = run_bidomain_with(&mesh, &bcfg, &ops)?;
    Ok((mesh, run))
}

/// Everything the studies read, owned in one place.
pub struct Prepared {
    pub config: RunConfig,
    pub mesh: TriMesh,
    pub run: BidomainRun,
    pub psi: ActivationMap,
    pub solver: FormulationSolver,
    pub fit: CubicIonic,
}

impl Prepared {
    /// `seed` drives the choice of vertices for the cubic fit.
    pub fn new(
        config: RunConfig,
        mesh: TriMesh,
        run: BidomainRun,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        let psi = compute_activation(
            &run.times,
            &run.v,
            &run.heart_vertices,
            mesh.num_vertices(),
            DEFAULT_THRESHOLD,
        )?;
        let ops = HeartTorsoOperators::new(&mesh, &config.conductivity)?;
        let solver = FormulationSolver::new(
            ops,
            mesh.heart_mask().to_vec(),
            config.formulation_options(),
        );
        let fit = fit_f_int(&run, &config.ionic, config.fit_points, seed).map_err(PipelineError::Fit)?;
        Ok(Prepared {
            config,
            mesh,
            run,
            psi,
            solver,
            fit,
        })
    }

    pub fn from_config(config: RunConfig, seed: u64) -> Result<Self, PipelineError> {
        let (mesh, run) = simulate(&config)?;
        Prepared::new(config, mesh, run, seed)
    }

    pub fn context(&self) -> StudyContext<'_> {
        StudyContext {
            run: &self.run,
            solver: &self.solver,
            ionic: &self.config.ionic,
            fit: Some(&self.fit),
        }
    }

    /// Heaviside fronts on `eps_grid`, optionally followed by the MS0D front.
    pub fn sweep_fronts(&self, eps_grid: &[f64], with_ms0d: bool) -> Result<Vec<FrontShape>, PipelineError> {
        let mut fronts = eps_grid
            .iter()
            .map(|&e| FrontShape::heaviside(e))
            .collect::<Result<Vec<_>, _>>()?;
        if with_ms0d {
            let trace = self.config.ms0d_trace().map_err(FrontSetupError::from)?;
            fronts.push(FrontShape::ms0d(&trace)?);
        }
        Ok(fronts)
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("bad number {s:?} in grid {text:?}"))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
            if !(h > 0.0) || b < a {
                return Err(format!("grid {text:?} needs step > 0 and stop >= start"));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| a + k as f64 * h).collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => Err(format!("grid {text:?} is neither start:stop:step nor a list")),
    }
}
