pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod harness;
pub mod model;
pub mod norms;
pub mod probes;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
