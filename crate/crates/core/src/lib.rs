pub mod bench;
pub mod confounds;
pub mod dependence;
pub mod error;
pub mod evalkit;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
