//! Activation-time extraction from transmembrane voltage time series.

use rayon::prelude::*;
use thiserror::Error;

use crate::spline::NaturalCubicSpline;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivationError {
    #[error("no propagation: no vertex crosses the threshold {threshold}")]
    NoPropagation { threshold: f64 },
    #[error("vertex {vertex} starts at or above the threshold")]
    StartsAboveThreshold { vertex: usize },
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
}

/// Nodal activation times. `None` marks a vertex that was not evaluated or
/// never crossed the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    psi: Vec<Option<f64>>,
    evaluated: Vec<bool>,
    threshold: f64,
}

impl ActivationMap {
    pub fn from_parts(psi: Vec<Option<f64>>, evaluated: Vec<bool>, threshold: f64) -> Self {
        assert_eq!(psi.len(), evaluated.len());
        ActivationMap {
            psi,
            evaluated,
            threshold,
        }
    }

    pub fn psi(&self) -> &[Option<f64>] {
        &self.psi
    }

    pub fn get(&self, vertex: usize) -> Option<f64> {
        self.psi[vertex]
    }

    pub fn is_evaluated(&self, vertex: usize) -> bool {
        self.evaluated[vertex]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn activated(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.psi.iter().enumerate().filter_map(|(i, p)| p.map(|t| (i, t)))
    }

    pub fn min(&self) -> Option<f64> {
        self.activated().map(|(_, t)| t).reduce(f64::min)
    }

    pub fn max(&self) -> Option<f64> {
        self.activated().map(|(_, t)| t).reduce(f64::max)
    }

    /// Same map with every activation time shifted by `delta` (vertex-wise).
    pub fn perturbed(&self, delta: impl Fn(usize) -> f64) -> Self {
        ActivationMap {
            psi: self
                .psi
                .iter()
                .enumerate()
                .map(|(i, p)| p.map(|t| t + delta(i)))
                .collect(),
            evaluated: self.evaluated.clone(),
            threshold: self.threshold,
        }
    }
}

/// Activation time of one sampled signal: first upward threshold crossing of
/// its natural cubic spline. `Ok(None)` when the signal never crosses.
pub fn activation_time(times: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    NaturalCubicSpline::new(times, values)?.first_upward_crossing(threshold)
}

/// Extracts activation times for `vertices` from `fields` (one full nodal
/// field per entry of `times`).
pub fn compute_activation(
    times: &[f64],
    fields: &[Vec<f64>],
    vertices: &[usize],
    num_vertices: usize,
    threshold: f64,
) -> Result<ActivationMap, ActivationError> {
    if times.len() != fields.len() {
        return Err(ActivationError::InvalidSeries(format!(
            "{} times but {} fields",
            times.len(),
            fields.len()
        )));
    }
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ActivationError::InvalidSeries(
            "need at least two strictly increasing times".into(),
        ));
    }
    if let Some(f) = fields.iter().find(|f| f.len() != num_vertices) {
        return Err(ActivationError::InvalidSeries(format!(
            "field of length {} but {num_vertices} vertices",
            f.len()
        )));
    }
    if let Some(&v) = vertices.iter().find(|&&v| v >= num_vertices) {
        return Err(ActivationError::InvalidSeries(format!(
            "vertex {v} out of range"
        )));
    }
    if let Some(&vertex) = vertices.iter().find(|&&v| fields[0][v] >= threshold) {
        return Err(ActivationError::StartsAboveThreshold { vertex });
    }

    let found: Vec<Option<f64>> = vertices
        .par_iter()
        .map(|&v| {
            let column: Vec<f64> = fields.iter().map(|f| f[v]).collect();
            activation_time(times, &column, threshold)
        })
        .collect();

    let mut psi = vec![None; num_vertices];
    let mut evaluated = vec![false; num_vertices];
    for (&v, t) in vertices.iter().zip(found) {
        psi[v] = t;
        evaluated[v] = true;
    }
    if psi.iter().all(Option::is_none) {
        return Err(ActivationError::NoPropagation { threshold });
    }
    Ok(ActivationMap {
        psi,
        evaluated,
        threshold,
    })
}
