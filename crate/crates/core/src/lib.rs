//! Multi-horizon retail demand forecasting.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod training;

pub use error::{Error, Result};
