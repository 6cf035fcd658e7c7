//! Heat kernels of non-local operators and Schrödinger heat-trace differences.

pub mod asymptotics;
pub mod bridge_mc;
pub mod error;
pub mod inequality_harness;
pub mod levy_kernels;
pub mod potentials;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod subordinators;
pub mod trace_engine;

pub use error::{NhtError, Result};
pub use quadrature::QuadratureConfig;
pub use rng::SeedStream;
