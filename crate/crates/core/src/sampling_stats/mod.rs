//! Monte Carlo engine: sampling from the equilibrium state, the fluctuation
//! processes and their distributional tests.

mod ball;
mod diagnostics;
mod experiments;
mod paths;
mod sampler;
mod stats;

pub use ball::{ball_measure, BallMeasure, BallOptions};
pub use diagnostics::*;
pub use experiments::*;
pub use paths::{
    fluctuation_path, fluctuation_value, log_markov_measure, observables_along, BirkhoffSums, FluctuationPath,
    ProcessKind,
};
pub use sampler::{sample_point, sample_rng, word_length, ChainSampler};
pub use stats::*;
