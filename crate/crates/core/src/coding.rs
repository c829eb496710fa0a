//! Full-shift symbolic codings and word indexing.
//!
//! Words are indexed with the first symbol most significant, so the index of
//! `s w` is `s * K^len(w) + index(w)` and the index of `w s` is
//! `index(w) * K + s`.

/// A system coded by a full shift on `alphabet_size()` symbols, each symbol
/// naming an inverse branch of the dynamics.
pub trait CodedSystem: Sync {
    type Point: Copy + Send + Sync;

    fn alphabet_size(&self) -> usize;

    /// The preimage of `p` inside the cell of `symbol`.
    fn inverse_branch(&self, p: Self::Point, symbol: usize) -> Self::Point;

    /// Point used to represent the unconstrained tail of a finite word.
    fn reference_point(&self) -> Self::Point;
}

pub fn word_index(word: &[usize], k: usize) -> usize {
    word.iter().fold(0, |acc, &s| acc * k + s)
}

pub fn index_to_word(mut idx: usize, len: usize, k: usize) -> Vec<usize> {
    let mut w = vec![0; len];
    for slot in w.iter_mut().rev() {
        *slot = idx % k;
        idx /= k;
    }
    w
}

/// Checked `k^n`.
pub fn word_count(k: usize, n: usize) -> Option<usize> {
    k.checked_pow(u32::try_from(n).ok()?)
}

/// Orbit `q_0, ..., q_L` of the point coded by `word` followed by `tail`:
/// `q_L = tail` and `q_j` is the preimage of `q_{j+1}` in cell `word[j]`.
/// Built backwards, so `q_j = T^j q_0` without forward error growth.
pub fn decode_orbit<S: CodedSystem + ?Sized>(sys: &S, word: &[usize], tail: S::Point) -> Vec<S::Point> {
    let mut out = vec![tail; word.len() + 1];
    for j in (0..word.len()).rev() {
        out[j] = sys.inverse_branch(out[j + 1], word[j]);
    }
    out
}

pub fn decode_word<S: CodedSystem + ?Sized>(sys: &S, word: &[usize], tail: S::Point) -> S::Point {
    word.iter().rev().fold(tail, |q, &s| sys.inverse_branch(q, s))
}

/// Representative point of every cylinder of length `depth`, indexed by word.
pub fn cylinder_points<S: CodedSystem + ?Sized>(sys: &S, depth: usize) -> Vec<S::Point> {
    let k = sys.alphabet_size();
    let mut level = vec![sys.reference_point()];
    for _ in 0..depth {
        let len = level.len();
        let mut next = Vec::with_capacity(len * k);
        for s in 0..k {
            next.extend(level.iter().map(|&q| sys.inverse_branch(q, s)));
        }
        debug_assert_eq!(next.len(), len * k);
        level = next;
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Doubling map on the circle coded by binary digits.
    struct Doubling;

    impl CodedSystem for Doubling {
        type Point = f64;
        fn alphabet_size(&self) -> usize {
            2
        }
        fn inverse_branch(&self, p: f64, s: usize) -> f64 {
            (p + s as f64) / 2.0
        }
        fn reference_point(&self) -> f64 {
            0.5
        }
    }

    #[test]
    fn decode_doubling_digits() {
        // 0.011 followed by the midpoint tail
        let x = decode_word(&Doubling, &[0, 1, 1], 0.5);
        assert_eq!(x, 0.4375);
        let orbit = decode_orbit(&Doubling, &[0, 1, 1], 0.5);
        assert_eq!(orbit, vec![0.4375, 0.875, 0.75, 0.5]);
    }

    #[test]
    fn cylinder_points_are_indexed_by_word() {
        let pts = cylinder_points(&Doubling, 3);
        assert_eq!(pts.len(), 8);
        for (idx, &p) in pts.iter().enumerate() {
            let w = index_to_word(idx, 3, 2);
            assert_eq!(p, decode_word(&Doubling, &w, 0.5));
            assert_eq!(p, (idx as f64 + 0.5) / 8.0);
        }
    }

    #[test]
    fn word_count_overflow() {
        assert_eq!(word_count(6, 3), Some(216));
        assert_eq!(word_count(6, 40), None);
    }

    proptest! {
        #[test]
        fn index_round_trip(idx in 0usize..7776, k in 2usize..7) {
            let len = 5;
            let idx = idx % k.pow(len as u32);
            prop_assert_eq!(word_index(&index_to_word(idx, len, k), k), idx);
        }
    }
}
