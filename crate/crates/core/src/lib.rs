//! Battery graph networks for remaining-useful-life prediction.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod genmod;
pub mod grapher;
pub mod graph_inference;
pub mod init;
pub mod model;
pub mod objectives;
pub mod parallel;
pub mod readout;
pub mod rng;
pub mod rundir;
pub mod tensor;
pub mod trainer;

pub use error::{BgnError, Result};
