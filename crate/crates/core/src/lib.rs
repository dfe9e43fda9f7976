//! Forward computation of extracellular and body-surface potentials from
//! activation maps and front-shaped transmembrane voltages.
//!
//! Two static mappings from a transmembrane voltage to the extracellular
//! potential are provided (a source formulation and a balance formulation),
//! together with a semi-implicit bidomain reference solver and the experiment
//! harness that compares them.

pub mod mesh;
pub mod operators;
pub mod ionic;
pub mod spline;
pub mod activation;
pub mod fronts;
pub mod bidomain;
pub mod formulations;
pub mod experiments;
pub mod config;
pub mod io;
pub mod pipeline;
