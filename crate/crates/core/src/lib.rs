//! Fitted distributional evaluation: distributional off-policy evaluation by
//! repeatedly projecting Bellman backups onto a parametric model class.

pub mod bellman;
pub mod distributions;
pub mod divergences;
pub mod envs;
pub mod error;
pub mod evaluation;
pub mod fde;
pub mod harness;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
