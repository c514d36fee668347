//! Semiclassical Airy-layer asymptotics of spectrally smoothed Wigner
//! functions near an energy shell, with the numerical oracles needed to test
//! them.

pub mod airy;
pub mod classical;
pub mod error;
pub mod hk;
pub mod integrator;
pub mod midpoint;
pub mod potential;
pub mod quantum;
pub mod scalar;
pub mod specfun;

pub use classical::{action_partials, flow, flow_samples, FlowResult, PhasePoint};
pub use error::{Error, Result};
pub use integrator::IntegratorSpec;
pub use potential::Potential;
