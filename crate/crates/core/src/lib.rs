pub mod campaign;
pub mod coefficients;
pub mod convolution;
pub mod error;
pub mod models;
pub mod noise;
pub mod semigroup;
pub mod solver;
pub mod state_space;
pub mod stats;

pub use error::{Error, Result};
