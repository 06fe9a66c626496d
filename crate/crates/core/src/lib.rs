pub mod cutsets;
pub mod entropy;
pub mod error;
pub mod exterior;
pub mod furstenberg;
pub mod ifs;
pub mod interval;
pub mod lyapunov;
pub mod pipeline;
pub mod random;
pub mod separation;
pub mod stats;

pub use error::{Error, Result};
pub use ifs::{AffineIfs, AffineMap, EmpiricalMeasure};
