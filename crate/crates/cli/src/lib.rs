pub mod commands;
pub mod config;
pub mod counterfactual;
pub mod dataset;
pub mod error;

pub use commands::{Cli, Command, Format};
pub use counterfactual::{counterfactual_participation, Counterfactual, EpsilonPolicy};
pub use dataset::{load_dataset, Dataset};
pub use error::{CliError, ErrorRecord};
