pub mod error;
pub mod grid;
pub mod harness;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
