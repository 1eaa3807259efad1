//! Differentiable question answering over tables.

pub mod autodiff;
pub mod cli;
pub mod dataspace;
pub mod encoders;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod opsolver;
pub mod parallel;
pub mod rowsel;
pub mod selru;
pub mod trainer;

pub use error::{Error, Result};
