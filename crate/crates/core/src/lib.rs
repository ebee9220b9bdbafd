//! Lipschitz-free spaces over finite pointed metric spaces, Lipschitz tensor
//! cross-norms and Lipschitz summing norms, all reported as certified
//! brackets.

pub mod certify;
pub mod config;
pub mod error;
pub mod estimate;
pub mod free_space;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod lipmap;
pub mod lp;
pub mod operator;
pub mod pietsch;
pub mod search;
pub mod spaces;
pub mod summing;
pub mod tensor;

pub use error::{Error, Result};
pub use estimate::{Certificate, NormEstimate};

/// Seed used when neither the caller nor the environment supplies one.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;
