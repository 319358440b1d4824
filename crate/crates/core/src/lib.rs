//! Searched trajectory anomaly detection for filtering the samples of
//! stochastic pedestrian trajectory predictors.

pub mod autodiff;
pub mod blocks;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod nn;
pub mod search;
pub mod tensor;
pub mod tpeval;
pub mod tpsim;

pub use error::{Result, TpadError};
pub use tensor::Matrix;
