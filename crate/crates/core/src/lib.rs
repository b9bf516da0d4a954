pub mod error;
pub mod lasso;
pub mod linalg;
pub mod network;
pub mod dgp;
pub mod estimator;
pub mod inference;
pub mod montecarlo;

pub use error::{Error, Result};
