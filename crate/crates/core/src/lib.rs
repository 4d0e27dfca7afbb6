//! Continuous-imaginary-time path-integral Monte Carlo for transverse-field Ising models.

pub mod chain;
pub mod heatbath;
pub mod model;
pub mod trotter;
pub mod worldline;
pub mod estimators;
