//! Max-min secrecy energy efficiency for RIS-aided cell-free networks.

pub mod alg_perfect;
pub mod alg_robust;
pub mod channel;
pub mod conic;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod surrogate;
pub mod validate;

pub use error::{Error, Result};
