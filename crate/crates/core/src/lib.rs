pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod models;
pub mod nn;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
