//! Numerical experiments on fluctuations of ball measures for equilibrium
//! states of expanding skew products on the 2-torus.

pub mod cli;
pub mod coding;
pub mod conformal1d;
pub mod error;
pub mod map_models;
pub mod markov_partition;
mod roots;
pub mod sampling_stats;
pub mod thermodynamics;

pub use error::{Error, Result};
pub use map_models::{PotentialSpec, SkewMap, TorusPoint, TrigTerm};
