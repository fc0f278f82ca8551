pub mod adaptivity;
pub mod analysis;
pub mod benchmarks;
pub mod error;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod timestepping;

pub use error::{Error, Result};
