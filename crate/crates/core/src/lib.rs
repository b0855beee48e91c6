pub mod approx;
pub mod checks;
pub mod cli;
pub mod discretize;
pub mod error;
pub mod family;
pub mod fastlegs;
pub mod operators;
pub mod polys;
pub mod quad;
pub mod signal;

pub use error::{HippoError, Result};
pub use family::{Family, LegtScaling};
pub use signal::Signal;
