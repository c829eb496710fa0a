//! Transfer operator of a potential depending on the first `m` symbols of a
//! full shift, acting on functions of `m`-words.
//!
//! States are words `u` of length `m`; `u` can be followed by `v` when
//! `v = succ(u, s)`, i.e. `u` shifted left with `s` appended. The matrix is
//! `M[u, v] = exp(phi(u))` on those pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EIG_TOL: f64 = 1e-13;
const VEC_TOL: f64 = 1e-11;
const MAX_ITER: usize = 100_000;

/// Leading eigendata of the transfer matrix and the Markov chain it induces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferCore {
    pub alphabet: usize,
    pub depth: usize,
    /// `log` of the leading eigenvalue.
    pub pressure: f64,
    /// Right eigenvector (max-normalized).
    pub right: Vec<f64>,
    /// Left eigenvector (max-normalized).
    pub left: Vec<f64>,
    /// Stationary law of the chain on `m`-words (sums to 1).
    pub stationary: Vec<f64>,
    /// `P(u, s)` stored at `u * K + s`.
    pub transition: Vec<f64>,
    pub iterations: usize,
}

/// `succ(u, s)` for states of `depth` symbols over `k` letters.
#[inline]
pub fn successor(u: usize, s: usize, k: usize, tail_mod: usize) -> usize {
    (u % tail_mod) * k + s
}

fn power_iteration<F>(n: usize, apply: F) -> Result<(f64, Vec<f64>, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    let mut last = f64::NAN;
    for it in 1..=MAX_ITER {
        apply(&v, &mut w);
        // Collatz-Wielandt bracket on the eigenvalue
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (a, b) in w.iter().zip(&v) {
            let ratio = a / b;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let norm = w.iter().cloned().fold(0.0, f64::max);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonConvergence("transfer operator iterate is not finite".into()));
        }
        let mut change = 0.0f64;
        for (a, b) in v.iter_mut().zip(&w) {
            let nb = b / norm;
            change = change.max((nb - *a).abs());
            *a = nb;
        }
        if (hi - lo) <= EIG_TOL * hi && change <= VEC_TOL {
            return Ok((0.5 * (lo + hi), v, it));
        }
        last = hi - lo;
    }
    Err(Error::NonConvergence(format!(
        "power iteration stalled after {MAX_ITER} steps (eigenvalue bracket {last:e})"
    )))
}

impl TransferCore {
    /// Solves for the potential values `phi[u]` on the `k^depth` states.
    pub fn solve(alphabet: usize, depth: usize, phi: &[f64]) -> Result<Self> {
        let k = alphabet;
        let n = phi.len();
        assert_eq!(Some(n), crate::coding::word_count(k, depth), "one potential value per state");
        let tail_mod = n / k;
        let shift = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weight: Vec<f64> = phi.iter().map(|p| (p - shift).exp()).collect();

        let (lam_r, right, it_r) = power_iteration(n, |r, out| {
            let block: Vec<f64> = r.chunks_exact(k).map(|c| c.iter().sum()).collect();
            for (u, o) in out.iter_mut().enumerate() {
                *o = weight[u] * block[u % tail_mod];
            }
        })?;
        let (_, left, it_l) = power_iteration(n, |l, out| {
            let mut block = vec![0.0; tail_mod];
            for (u, (&lu, &wu)) in l.iter().zip(&weight).enumerate() {
                block[u % tail_mod] += lu * wu;
            }
            for (v, o) in out.iter_mut().enumerate() {
                *o = block[v / k];
            }
        })?;

        let mut transition = vec![0.0; n * k];
        for u in 0..n {
            for s in 0..k {
                let v = successor(u, s, k, tail_mod);
                transition[u * k + s] = weight[u] / lam_r * right[v] / right[u];
            }
        }
        let mut stationary: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a * b).collect();
        let total: f64 = stationary.iter().sum();
        stationary.iter_mut().for_each(|p| *p /= total);

        Ok(TransferCore {
            alphabet,
            depth,
            pressure: lam_r.ln() + shift,
            right,
            left,
            stationary,
            transition,
            iterations: it_r.max(it_l),
        })
    }

    pub fn n_states(&self) -> usize {
        self.stationary.len()
    }

    #[inline]
    pub fn tail_mod(&self) -> usize {
        self.n_states() / self.alphabet
    }

    #[inline]
    pub fn prob(&self, u: usize, s: usize) -> f64 {
        self.transition[u * self.alphabet + s]
    }

    /// Marginals of the stationary law on words of length `0..=depth`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.stationary.clone()];
        for _ in 0..self.depth {
            let prev = out.last().unwrap();
            out.push(prev.chunks_exact(self.alphabet).map(|c| c.iter().sum()).collect());
        }
        out.reverse();
        out
    }

    /// Entropy of the chain, `-sum pi(u) P(u,s) log P(u,s)`.
    pub fn entropy_rate(&self) -> f64 {
        let k = self.alphabet;
        self.stationary
            .iter()
            .enumerate()
            .map(|(u, &p)| {
                -p * self.transition[u * k..(u + 1) * k].iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>()
            })
            .sum()
    }

    /// `H_{m+1} - H_m` from block entropies of the stationary measure.
    pub fn block_entropy_rate(&self) -> f64 {
        let k = self.alphabet;
        let h_m: f64 = -self.stationary.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
        let mut h_m1 = 0.0;
        for (u, &p) in self.stationary.iter().enumerate() {
            for s in 0..k {
                let q = p * self.transition[u * k + s];
                if q > 0.0 {
                    h_m1 -= q * q.ln();
                }
            }
        }
        h_m1 - h_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_potential_gives_topological_entropy() {
        let core = TransferCore::solve(6, 3, &vec![0.0; 216]).unwrap();
        assert_abs_diff_eq!(core.pressure, 6f64.ln(), epsilon = 1e-13);
        assert!(core.stationary.iter().all(|p| (p - 1.0 / 216.0).abs() < 1e-15));
        assert_abs_diff_eq!(core.entropy_rate(), 6f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn depth_one_pressure_is_log_sum_exp() {
        let v = [0.3, -1.2, 0.7];
        let core = TransferCore::solve(3, 1, &v).unwrap();
        let want = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(core.pressure, want, epsilon = 1e-13);
    }

    #[test]
    fn two_symbol_markov_potential_matches_closed_form() {
        // phi depends on (w0, w1); the matrix reduces to A[a][b] = exp(phi(a, b))
        // whose Perron root for a 2x2 matrix is explicit
        let phi = [0.1, -0.4, 0.9, 0.2];
        let core = TransferCore::solve(2, 2, &phi).unwrap();
        let a: Vec<f64> = phi.iter().map(|x: &f64| x.exp()).collect();
        let (tr, det) = (a[0] + a[3], a[0] * a[3] - a[1] * a[2]);
        let root = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
        assert_abs_diff_eq!(core.pressure, root.ln(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn chain_is_stochastic_and_stationary(vals in proptest::collection::vec(-2.0f64..2.0, 27)) {
            let core = TransferCore::solve(3, 3, &vals).unwrap();
            let k = 3;
            for u in 0..27 {
                let row: f64 = (0..k).map(|s| core.prob(u, s)).sum();
                prop_assert!((row - 1.0).abs() < 1e-12);
            }
            let mut next = vec![0.0; 27];
            for u in 0..27 {
                for s in 0..k {
                    next[successor(u, s, k, 9)] += core.stationary[u] * core.prob(u, s);
                }
            }
            for (a, b) in next.iter().zip(&core.stationary) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            prop_assert!((core.entropy_rate() - core.block_entropy_rate()).abs() < 1e-10);
        }
    }
}
