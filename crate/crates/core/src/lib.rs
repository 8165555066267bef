pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod model;
pub mod phenotype;
pub mod provenance;
pub mod synth;
pub mod tracking;
pub mod train;
pub mod types;

pub use error::{Error, Result};
