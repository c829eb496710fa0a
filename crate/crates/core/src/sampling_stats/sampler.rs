//! Exact sampling from the discretized equilibrium state.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coding::{decode_orbit, CodedSystem};
use crate::error::{Error, Result};
use crate::markov_partition::{CodedPoint, MarkovPartition};
use crate::thermodynamics::{successor, GibbsModel, TransferCore};

/// Independent stream for sample `index`, whatever the evaluation order.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws words from the order-`m` chain of a transfer core.
#[derive(Clone, Debug)]
pub struct ChainSampler<'a> {
    core: &'a TransferCore,
    init: WeightedIndex<f64>,
}

impl<'a> ChainSampler<'a> {
    pub fn new(core: &'a TransferCore) -> Result<Self> {
        let init = WeightedIndex::new(&core.stationary)
            .map_err(|e| Error::Inconsistent(format!("stationary law is not a distribution: {e}")))?;
        Ok(ChainSampler { core, init })
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.init.sample(rng)
    }

    /// Next symbol after state `u`.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, u: usize) -> usize {
        let k = self.core.alphabet;
        let row = &self.core.transition[u * k..(u + 1) * k];
        let mut r: f64 = rng.random();
        for (s, &p) in row.iter().enumerate() {
            if r < p {
                return s;
            }
            r -= p;
        }
        // round-off left r just above the last positive entry
        row.iter().rposition(|&p| p > 0.0).unwrap_or(k - 1)
    }

    /// Word of length `len >= depth` whose law is the stationary chain.
    pub fn word<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<usize> {
        let (k, m) = (self.core.alphabet, self.core.depth);
        let tail = self.core.tail_mod();
        let mut u = self.initial_state(rng);
        let mut word = crate::coding::index_to_word(u, m, k);
        word.reserve(len.saturating_sub(m));
        while word.len() < len {
            let s = self.step(rng, u);
            word.push(s);
            u = successor(u, s, k, tail);
        }
        word.truncate(len);
        word
    }
}

/// Word length covering the hitting times down to scale `exp(min_log_eps)`
/// plus the symbolic windows read after them.
pub fn word_length(model: &GibbsModel, min_log_eps: f64) -> usize {
    let (lo_f, _) = model.map.fprime_bounds();
    let (lo_g, _) = model.map.dgdy_bounds();
    let rate = lo_f.min(lo_g).ln();
    let steps = (-min_log_eps.min(0.0) / rate).ceil() as usize;
    steps + 2 + model.depth.max(model.est_depth() + 1)
}

/// Point drawn from the model with its coding of length `len`.
pub fn sample_point(model: &GibbsModel, part: &MarkovPartition, sampler: &ChainSampler, seed: u64, index: u64, len: usize) -> CodedPoint {
    let mut rng = sample_rng(seed, index);
    let word = sampler.word(&mut rng, len);
    let orbit = decode_orbit(part, &word, part.reference_point());
    CodedPoint::from_orbit(&model.map, word, orbit)
}
