//! Expanding circle maps `f(x) = k x + (a / 2 pi) sin(2 pi x)` and their
//! one-dimensional fluctuation theory.

use std::f64::consts::TAU;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{cylinder_points, decode_orbit, index_to_word, word_count, CodedSystem};
use crate::error::{Error, Result};
use crate::map_models::{wrap_unit, PotentialSpec};
use crate::roots::solve_clamped;
use crate::sampling_stats::{
    arcsine_from_paths, clt_from_samples, maximum_from_paths, median_from_samples, sample_rng, ChainSampler,
    ExperimentConfig, TestReport,
};
use crate::thermodynamics::{green_kubo, TransferCore, MAX_STATES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircleMap")]
pub struct CircleMap {
    k: u32,
    a: f64,
}

#[derive(Deserialize)]
struct RawCircleMap {
    k: u32,
    #[serde(default)]
    a: f64,
}

impl TryFrom<RawCircleMap> for CircleMap {
    type Error = Error;
    fn try_from(r: RawCircleMap) -> Result<Self> {
        CircleMap::new(r.k, r.a)
    }
}

impl CircleMap {
    pub fn new(k: u32, a: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameters(format!("degree must be at least 2 (k = {k})")));
        }
        if !(a.is_finite() && a.abs() < f64::from(k) - 1.0) {
            return Err(Error::InvalidParameters(format!("expansion violated: |a| = {} >= k - 1 = {}", a.abs(), k - 1)));
        }
        Ok(CircleMap { k, a })
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    fn lift(&self, x: f64) -> (f64, f64) {
        let (s, c) = (TAU * x).sin_cos();
        (f64::from(self.k) * x + self.a / TAU * s, f64::from(self.k) + self.a * c)
    }

    pub fn f(&self, x: f64) -> f64 {
        wrap_unit(self.lift(x).0)
    }

    pub fn log_fprime(&self, x: f64) -> f64 {
        self.lift(x).1.ln()
    }

    /// Cell of `x`: `i` with `F(x)` in `[i, i + 1)`.
    pub fn symbol(&self, x: f64) -> usize {
        (self.lift(wrap_unit(x)).0.floor() as usize).min(self.k() - 1)
    }
}

impl CodedSystem for CircleMap {
    type Point = f64;

    fn alphabet_size(&self) -> usize {
        self.k()
    }

    fn inverse_branch(&self, x: f64, symbol: usize) -> f64 {
        solve_clamped(|u| self.lift(u), wrap_unit(x) + symbol as f64, 0.0, 1.0)
    }

    fn reference_point(&self) -> f64 {
        0.5
    }
}

fn potential_1d(map: &CircleMap, potential: &PotentialSpec, word: &[usize], x: f64) -> f64 {
    match potential {
        PotentialSpec::CylinderPiecewiseConstant { depth, values } => {
            values[word[..*depth].iter().fold(0, |a, &s| a * map.k() + s)]
        }
        PotentialSpec::TrigPoly { constant, terms } => {
            constant
                + terms
                    .iter()
                    .map(|t| {
                        let (s, c) = (TAU * f64::from(t.nx) * x).sin_cos();
                        t.cos * c + t.sin * s
                    })
                    .sum::<f64>()
        }
        PotentialSpec::NegLogDetJacobian { scale } => -scale * map.log_fprime(x),
    }
}

fn validate_1d(map: &CircleMap, potential: &PotentialSpec, depth: usize) -> Result<()> {
    match potential {
        PotentialSpec::CylinderPiecewiseConstant { depth: d, values } => {
            if *d == 0 || *d > depth || word_count(map.k(), *d) != Some(values.len()) {
                return Err(Error::InvalidParameters(format!(
                    "piecewise-constant potential of depth {d} needs {}^{d} values and depth <= {depth}",
                    map.k()
                )));
            }
        }
        PotentialSpec::TrigPoly { terms, .. } => {
            if terms.iter().any(|t| t.ny != 0) {
                return Err(Error::InvalidParameters("circle potentials cannot depend on y".into()));
            }
        }
        PotentialSpec::NegLogDetJacobian { .. } => {}
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GibbsModel1d {
    pub map: CircleMap,
    pub potential: PotentialSpec,
    pub depth: usize,
    /// Pressure of the raw potential.
    pub pressure: f64,
    pub phi_bar: Vec<f64>,
    pub core: TransferCore,
    pub lambda: f64,
    pub h: f64,
    pub delta: f64,
    /// Asymptotic variance of `phi + delta log f'`.
    pub sigma_u2: f64,
    pub sigma2: f64,
    pub gk_terms: usize,
}

pub fn build_gibbs_1d(map: &CircleMap, potential: &PotentialSpec, depth: usize) -> Result<GibbsModel1d> {
    let k = map.k();
    if depth < 1 || !word_count(k, depth).is_some_and(|n| n <= MAX_STATES) {
        return Err(Error::InvalidParameters(format!("{k}^{depth} cylinders exceed the budget of {MAX_STATES}")));
    }
    validate_1d(map, potential, depth)?;
    let pts = cylinder_points(map, depth);
    let phi: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(u, &x)| potential_1d(map, potential, &index_to_word(u, depth, k), x))
        .collect();
    let core = TransferCore::solve(k, depth, &phi)?;
    let phi_bar: Vec<f64> = phi.iter().map(|p| p - core.pressure).collect();
    let lf: Vec<f64> = pts.iter().map(|&x| map.log_fprime(x)).collect();
    let mu = &core.stationary;
    let lambda: f64 = mu.iter().zip(&lf).map(|(m, v)| m * v).sum();
    let h = -mu.iter().zip(&phi_bar).map(|(m, v)| m * v).sum::<f64>();
    let delta = h / lambda;
    let phi_u: Vec<f64> = phi_bar.iter().zip(&lf).map(|(p, l)| p + delta * l).collect();
    let residual: f64 = mu.iter().zip(&phi_u).map(|(m, v)| m * v).sum();
    if residual.abs() > 1e-6 {
        return Err(Error::Inconsistent(format!("phi + delta log f' integrates to {residual:e}")));
    }
    let gk = green_kubo(&core, depth, mu, &[&phi_u])?;
    let sigma_u2 = gk.q[0][0].max(0.0);
    Ok(GibbsModel1d {
        map: *map,
        potential: potential.clone(),
        depth,
        pressure: core.pressure,
        phi_bar,
        sigma2: limit_variance_1d(sigma_u2, lambda),
        sigma_u2,
        core,
        lambda,
        h,
        delta,
        gk_terms: gk.terms,
    })
}

/// `sigma_u^2 / lambda`.
pub fn limit_variance_1d(sigma_u2: f64, lambda: f64) -> f64 {
    sigma_u2 / lambda
}

/// Coded orbit of one sampled point: `log F_j` and `S_j (phi + delta log f')`.
struct Orbit1d {
    log_f: Vec<f64>,
    sums: Vec<f64>,
}

fn sample_orbit(g: &GibbsModel1d, sampler: &ChainSampler, seed: u64, index: u64, len: usize) -> Orbit1d {
    let mut rng = sample_rng(seed, index);
    let word = sampler.word(&mut rng, len);
    let orbit = decode_orbit(&g.map, &word, g.map.reference_point());
    let m = g.depth;
    let usable = len + 1 - m;
    let mut log_f = Vec::with_capacity(usable + 1);
    let mut sums = Vec::with_capacity(usable + 1);
    let (mut lf, mut s) = (0.0, 0.0);
    log_f.push(0.0);
    sums.push(0.0);
    for j in 0..usable {
        let x = orbit[j];
        let d = g.map.log_fprime(x);
        let phi = match g.potential {
            PotentialSpec::CylinderPiecewiseConstant { .. } => g.phi_bar[word[j..j + m].iter().fold(0, |a, &b| a * g.map.k() + b)],
            _ => potential_1d(&g.map, &g.potential, &[], x) - g.pressure,
        };
        lf += d;
        s += phi + g.delta * d;
        log_f.push(lf);
        sums.push(s);
    }
    Orbit1d { log_f, sums }
}

impl Orbit1d {
    /// `S_{m_eps}(phi_u) / sqrt(-log eps)` with `m_eps` the last `j` with `log F_j <= -log eps`.
    fn value(&self, log_eps: f64, norm: f64) -> Result<f64> {
        if log_eps >= 0.0 {
            return Ok(0.0);
        }
        let budget = -log_eps * (1.0 + 1e-12);
        let pos = self.log_f.partition_point(|&v| v <= budget);
        if pos == self.log_f.len() {
            return Err(Error::Resolution("coded orbit shorter than the hitting time".into()));
        }
        Ok(self.sums[pos - 1] / norm)
    }
}

fn draw_orbits(g: &GibbsModel1d, cfg: &ExperimentConfig) -> Result<Vec<Orbit1d>> {
    let sampler = ChainSampler::new(&g.core)?;
    let rate = (f64::from(g.map.k) - g.map.a.abs()).ln();
    let len = (-cfg.smallest_log_eps() / rate).ceil() as usize + 2 + g.depth;
    Ok((0..cfg.n_samples as u64).into_par_iter().map(|i| sample_orbit(g, &sampler, cfg.seed, i, len)).collect())
}

/// `N''_eps(1)` for the samples of `cfg` at its smallest scale.
pub fn endpoints_1d(g: &GibbsModel1d, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let log_eps = cfg.smallest_log_eps();
    let norm = (-log_eps).sqrt();
    draw_orbits(g, cfg)?.iter().map(|o| o.value(log_eps, norm)).collect()
}

/// Paths `t -> N''_eps(t)` over `cfg.t_grid` at the smallest scale.
pub fn paths_1d(g: &GibbsModel1d, cfg: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let log_eps = cfg.smallest_log_eps();
    let norm = (-log_eps).sqrt();
    draw_orbits(g, cfg)?
        .iter()
        .map(|o| cfg.t_grid.iter().map(|&t| o.value(t * log_eps, norm)).collect())
        .collect()
}

/// CLT, median, arc-sine and maximum tests for the circle map.
pub fn clt_experiment_1d(g: &GibbsModel1d, cfg: &ExperimentConfig) -> Result<Vec<TestReport>> {
    let start = Instant::now();
    let values = endpoints_1d(g, cfg)?;
    let mut clt = clt_from_samples(&values, g.sigma2, cfg.smallest_log_eps());
    clt.name = "clt_1d".into();
    clt.runtime_s = start.elapsed().as_secs_f64();
    let mut out = vec![clt];
    if g.sigma2 >= crate::sampling_stats::DEGENERATE_SIGMA2 {
        let start = Instant::now();
        let paths = paths_1d(g, cfg)?;
        let mut med = median_from_samples(&values);
        let mut arc = arcsine_from_paths(&paths, &cfg.t_grid);
        let mut max = maximum_from_paths(&paths, &cfg.t_grid, g.sigma2, &[0.5, 1.0, 1.5, 2.0], cfg.seed);
        let secs = start.elapsed().as_secs_f64();
        for (r, name) in [(&mut med, "median_1d"), (&mut arc, "arcsine_1d"), (&mut max, "maximum_1d")] {
            r.name = name.into();
            r.runtime_s = secs;
        }
        out.extend([med, arc, max]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::decode_word;
    use crate::map_models::{SkewMap, TrigTerm};
    use crate::thermodynamics::build_gibbs;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bernoulli_1d(p: f64) -> PotentialSpec {
        PotentialSpec::CylinderPiecewiseConstant { depth: 1, values: vec![p.ln(), (1.0 - p).ln()] }
    }

    #[test]
    fn rejects_non_expanding() {
        let e = CircleMap::new(2, 1.0).unwrap_err();
        assert!(e.to_string().contains("expansion violated"));
    }

    #[test]
    fn lebesgue_on_doubling() {
        let map = CircleMap::new(2, 0.0).unwrap();
        let g = build_gibbs_1d(&map, &PotentialSpec::NegLogDetJacobian { scale: 1.0 }, 4).unwrap();
        assert_abs_diff_eq!(g.pressure, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta, 1.0, epsilon = 1e-12);
        assert!(g.sigma2 < 1e-20);
    }

    #[test]
    fn bernoulli_closed_form() {
        let map = CircleMap::new(2, 0.0).unwrap();
        let (p, q) = (0.25f64, 0.75f64);
        let g = build_gibbs_1d(&map, &bernoulli_1d(p), 3).unwrap();
        let h = -(p * p.ln() + q * q.ln());
        assert_abs_diff_eq!(g.delta, h / 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.sigma2, p * q * (p / q).ln().powi(2) / 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn trig_depth_consistency() {
        let map = CircleMap::new(2, 0.4).unwrap();
        let phi = PotentialSpec::trig(0.0, vec![TrigTerm { nx: 1, ny: 0, cos: 0.3, sin: 0.1 }]);
        let a = build_gibbs_1d(&map, &phi, 8).unwrap();
        let b = build_gibbs_1d(&map, &phi, 10).unwrap();
        assert!((a.delta - b.delta).abs() < 1e-3);
        assert!((a.sigma2 - b.sigma2).abs() < 1e-3);
        assert!((a.lambda - b.lambda).abs() < 1e-3);
    }

    #[test]
    fn decoupled_product_matches_skew_pipeline() {
        let phi_x = vec![TrigTerm { nx: 1, ny: 0, cos: 0.25, sin: -0.1 }];
        let circle = CircleMap::new(2, 0.3).unwrap();
        let one = build_gibbs_1d(&circle, &PotentialSpec::trig(0.1, phi_x.clone()), 5).unwrap();
        let skew = SkewMap::new(2, 0.3, 3, 0.0, 0.0).unwrap();
        let two = build_gibbs(&skew, &PotentialSpec::trig(0.1 - 3f64.ln(), phi_x), 5).unwrap();
        assert_abs_diff_eq!(one.pressure, two.pressure, epsilon = 1e-10);
        assert!((one.sigma2 - two.sigma2).abs() < 1e-8, "{} {}", one.sigma2, two.sigma2);
        assert!(two.q[0][0].abs() < 1e-8);
    }

    #[test]
    fn sampled_endpoints_vanish_for_lebesgue() {
        let map = CircleMap::new(2, 0.0).unwrap();
        let g = build_gibbs_1d(&map, &PotentialSpec::NegLogDetJacobian { scale: 1.0 }, 3).unwrap();
        let cfg = ExperimentConfig::new(vec![2f64.powi(-40)], 200, 3);
        let reports = clt_experiment_1d(&g, &cfg).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(reports[0].pass);
    }

    proptest! {
        #[test]
        fn inverse_branch_codes_its_symbol(x in 0.0f64..1.0, s in 0usize..3, a in -1.5f64..1.5) {
            let map = CircleMap::new(3, a).unwrap();
            let u = map.inverse_branch(x, s);
            prop_assert_eq!(map.symbol(u), s);
            prop_assert!((map.f(u) - x).abs() < 1e-12 || (map.f(u) - x).abs() > 1.0 - 1e-12);
            let w = decode_word(&map, &[s, 1, 0], 0.5);
            prop_assert!((0.0..1.0).contains(&w));
        }
    }
}
