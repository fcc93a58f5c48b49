//! Pseudospectral reduction of nonlinear renewal equations
//! `b(t) = F(b_t)` to ordinary differential equations, with equilibrium
//! continuation, characteristic roots, periodic orbits and a baseline
//! implementation of the earlier direct discretization.
//!
//! Everything is generic over the scalar type (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the command-line tool uses.

pub mod cheb;
pub mod continuation;
pub mod discretize;
pub mod dynamics;
pub mod error;
pub mod legacy;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::{Field, Real};

pub type Mesh = cheb::ChebyshevMesh<f64>;
pub type Model = model::RenewalModel<f64>;
pub type Family = model::ModelFamily<f64>;
pub type System = discretize::DiscretizedSystem<f64>;
pub type Legacy = legacy::LegacySystem<f64>;
pub type Spectrum = spectral::Spectrum<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
pub type Orbit = dynamics::OrbitSummary<f64>;
pub type BranchPoint = continuation::BranchPoint<f64>;
pub type BifurcationPoint = continuation::BifurcationPoint<f64>;
