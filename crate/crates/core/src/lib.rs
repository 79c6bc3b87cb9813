//! Numerics for the Fisher–KPP equation driven by the fractional Laplacian
//! `(-Δ)^α`: the fractional heat kernel, its large-`x` decomposition, a periodic
//! pseudo-spectral solver and front tracking.

pub mod asymptotics;
pub mod error;
pub mod front;
pub mod kernel;
pub mod quadrature;
pub mod solver;
pub mod specfun;

pub use error::{Error, Result};
