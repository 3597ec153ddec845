pub mod analysis;
pub mod data;
pub mod error;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
