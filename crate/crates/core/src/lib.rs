//! Direct collocation for optimal control with solution representation by
//! integrated residual minimization.

pub mod error;
pub mod error_analysis;
pub mod mesh;
pub mod nlp;
pub mod ocp;
pub mod pipeline;
pub mod problems;
pub mod quadrature;
pub mod residual;
pub mod sim;
pub mod trajectory;
pub mod transcription;

#[cfg(test)]
mod test_problems;

pub use error::{Error, Result};
