//! Window measures and Green-Kubo covariances for observables that depend on
//! the first `D` symbols, under the Markov chain of a `TransferCore`.

use crate::error::{Error, Result};

use super::transfer::TransferCore;

/// Relative size of a correlation below which the series is truncated.
pub const GK_REL_TOL: f64 = 1e-12;
/// Hard cap on the number of correlation terms.
pub const GK_MAX_TERMS: usize = 1000;

/// Measure of every word of length `d >= depth`, indexed by word.
pub fn window_measure(core: &TransferCore, d: usize) -> Vec<f64> {
    assert!(d >= core.depth);
    let k = core.alphabet;
    let n = core.n_states();
    let mut mu = core.stationary.clone();
    for _ in core.depth..d {
        let mut next = Vec::with_capacity(mu.len() * k);
        for (w, &p) in mu.iter().enumerate() {
            let u = w % n;
            next.extend((0..k).map(|s| p * core.prob(u, s)));
        }
        mu = next;
    }
    mu
}

/// `(P v)(w) = E[v(shifted window) | w]` on windows of length `d`.
pub fn koopman_apply(core: &TransferCore, d: usize, v: &[f64], out: &mut [f64]) {
    let k = core.alphabet;
    let n = core.n_states();
    let tail = v.len() / k;
    debug_assert_eq!(v.len(), k.pow(d as u32));
    for (w, o) in out.iter_mut().enumerate() {
        let u = w % n;
        let base = (w % tail) * k;
        let probs = &core.transition[u * k..(u + 1) * k];
        *o = probs.iter().zip(&v[base..base + k]).map(|(p, x)| p * x).sum();
    }
}

/// Result of a Green-Kubo summation.
#[derive(Clone, Debug)]
pub struct GreenKubo {
    pub q: Vec<Vec<f64>>,
    pub terms: usize,
}

/// `Q_ij = C_ij(0) + sum_{r>=1} (C_ij(r) + C_ji(r))` with `C_ij(r) = E[phi_i phi_j o T^r]`.
pub fn green_kubo(core: &TransferCore, d: usize, mu: &[f64], obs: &[&[f64]]) -> Result<GreenKubo> {
    let p = obs.len();
    let dot = |a: &[f64], b: &[f64]| -> f64 { mu.iter().zip(a).zip(b).map(|((m, x), y)| m * x * y).sum() };
    let mut q = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            q[i][j] = dot(obs[i], obs[j]);
        }
    }
    let scale = (0..p).map(|i| q[i][i]).fold(1.0, f64::max);
    let mut pushed: Vec<Vec<f64>> = obs.iter().map(|o| o.to_vec()).collect();
    let mut scratch = vec![0.0; mu.len()];
    let mut quiet = 0;
    for r in 1..=GK_MAX_TERMS {
        for v in pushed.iter_mut() {
            koopman_apply(core, d, v, &mut scratch);
            std::mem::swap(v, &mut scratch);
        }
        let mut largest = 0.0f64;
        for i in 0..p {
            for j in 0..p {
                // C_ij(r) = E[phi_i * P^r phi_j]
                let c = dot(obs[i], &pushed[j]);
                q[i][j] += c;
                q[j][i] += c;
                largest = largest.max(c.abs());
            }
        }
        // diagonal picked up 2 C_ii(r), off-diagonal C_ij + C_ji
        if largest <= GK_REL_TOL * scale {
            quiet += 1;
            if quiet == 3 {
                return Ok(GreenKubo { q, terms: r });
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NonConvergence(format!(
        "correlations still above {GK_REL_TOL:e} after {GK_MAX_TERMS} terms; raise the depth"
    )))
}
