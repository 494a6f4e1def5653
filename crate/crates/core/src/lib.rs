//! Knowledge distillation for click-through-rate prediction.

pub mod data;
pub mod distill;
pub mod error;
pub mod experiment;
pub mod model;
pub mod persist;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
