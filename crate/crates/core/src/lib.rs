//! Simulation laboratory for McKean-Vlasov SDEs driven by Lévy jump noise.
//!
//! The crate builds solutions the constructive way: Euler steps with big
//! jumps interlaced at their exact times, a Picard iteration over measure
//! flows, and the mean-field particle system coupled to limit copies. The
//! [`chaos`] and [`common_noise`] modules measure propagation-of-chaos rates.
//!
//! Data-parallel loops run on rayon by default; build without the `parallel`
//! feature for a purely sequential crate. Results never depend on the worker
//! count.

pub mod chaos;
pub mod common_noise;
pub mod error;
pub mod exec;
pub mod levy;
pub mod model;
pub mod numeric;
pub mod solver;
pub mod stream;
pub mod wasserstein;

pub use error::{Error, Result};
pub use exec::Exec;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
