//! Distributional tests of the fluctuation processes.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov_partition::{CodedPoint, MarkovPartition};
use crate::thermodynamics::{successor, GibbsModel};

use super::paths::{fluctuation_path, fluctuation_value, BirkhoffSums, ProcessKind};
use super::sampler::{sample_point, sample_rng, word_length, ChainSampler};
use super::stats::{
    abs_sup_cdf, arcsine_cdf, brownian_oracle, ks_critical_1pct, ks_statistic, normal_cdf, occupation_time,
    series_from_one, sup_cdf, sup_fractions, wilson_interval,
};

/// Below this `sigma^2` a model counts as degenerate.
pub const DEGENERATE_SIGMA2: f64 = 1e-6;
/// Slack applied to asymptotic KS critical values.
pub const KS_SLACK: f64 = 1.5;
pub const ARCSINE_TOL: f64 = 0.07;
pub const MEDIAN_TOL: f64 = 0.03;
pub const MAXIMUM_TOL: f64 = 0.03;
pub const ORACLE_PATHS: usize = 100_000;
/// Rows of the quantile table attached to CLT reports.
pub const CDF_ROWS: usize = 512;

pub fn uniform_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
}

fn default_eps_list() -> Vec<f64> {
    vec![2f64.powi(-40)]
}

fn default_n_samples() -> usize {
    4000
}

fn default_t_grid() -> Vec<f64> {
    uniform_grid(101)
}

fn default_kind() -> ProcessKind {
    ProcessKind::Birkhoff
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Decreasing scales in `(0, 1)`; tests run at the last (smallest) one.
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kind")]
    pub process_kind: ProcessKind,
}

impl ExperimentConfig {
    pub fn new(eps_list: Vec<f64>, n_samples: usize, seed: u64) -> Self {
        ExperimentConfig { eps_list, t_grid: default_t_grid(), n_samples, seed, process_kind: ProcessKind::Birkhoff }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.eps_list.is_empty() || self.eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad("eps_list must be non-empty with entries in (0, 1)");
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_list must be strictly decreasing");
        }
        let t = &self.t_grid;
        if t.len() < 2 || t[0] != 0.0 || t[t.len() - 1] != 1.0 || t.windows(2).any(|w| w[1] <= w[0]) {
            return bad("t_grid must increase from 0 to 1");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        Ok(())
    }

    pub fn smallest_log_eps(&self) -> f64 {
        self.eps_list.last().expect("validated").ln()
    }
}

/// One row of a plot-ready table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub statistic: f64,
    pub empirical: f64,
    pub reference: f64,
    pub band_low: f64,
    pub band_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: String,
    pub empirical: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub sample_size: usize,
    pub runtime_s: f64,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub table: Vec<TableRow>,
}

impl TestReport {
    pub fn new(name: &str, statistic: &str, empirical: f64, reference: f64, tolerance: f64, pass: bool, n: usize) -> Self {
        TestReport {
            name: name.into(),
            statistic: statistic.into(),
            empirical,
            reference,
            tolerance,
            pass,
            sample_size: n,
            runtime_s: 0.0,
            notes: Vec::new(),
            table: Vec::new(),
        }
    }

    pub(crate) fn timed(mut self, start: Instant) -> Self {
        self.runtime_s = start.elapsed().as_secs_f64();
        self
    }
}

pub(crate) fn refuse_degenerate(model_sigma2: f64, test: &str) -> Result<()> {
    if model_sigma2 < DEGENERATE_SIGMA2 {
        return Err(Error::InvalidParameters(format!(
            "{test} needs a non-degenerate model; sigma^2 = {model_sigma2:e} means mu is the absolutely continuous measure"
        )));
    }
    Ok(())
}

/// Points drawn from the model, coded deep enough for every scale in `cfg`.
pub fn draw_points(model: &GibbsModel, part: &MarkovPartition, cfg: &ExperimentConfig) -> Result<Vec<CodedPoint>> {
    draw_points_to(model, part, cfg.seed, cfg.n_samples, cfg.smallest_log_eps())
}

pub fn draw_points_to(model: &GibbsModel, part: &MarkovPartition, seed: u64, n: usize, min_log_eps: f64) -> Result<Vec<CodedPoint>> {
    if part.map() != &model.map {
        return Err(Error::InvalidParameters("partition and model are built on different maps".into()));
    }
    let sampler = ChainSampler::new(&model.core)?;
    let len = word_length(model, min_log_eps);
    Ok((0..n as u64).into_par_iter().map(|i| sample_point(model, part, &sampler, seed, i, len)).collect())
}

/// `N''_eps(1)` for each point.
pub fn birkhoff_endpoints(model: &GibbsModel, points: &[CodedPoint], log_eps: f64) -> Result<Vec<f64>> {
    let norm = (-log_eps).sqrt();
    points.par_iter().map(|cp| Ok(BirkhoffSums::new(model, cp).at(cp, log_eps)? / norm)).collect()
}

/// Paths of `kind` over `t_grid` for each point.
pub fn paths_of(
    model: &GibbsModel,
    part: &MarkovPartition,
    points: &[CodedPoint],
    log_eps: f64,
    t_grid: &[f64],
    kind: ProcessKind,
) -> Result<Vec<Vec<f64>>> {
    points
        .par_iter()
        .map(|cp| fluctuation_path(model, part, cp, log_eps, t_grid, kind).map(|p| p.values))
        .collect()
}

/// KS test of `values` against `N(0, sigma2)`, or the bounded-fluctuation
/// check when `sigma2` is degenerate.
pub fn clt_from_samples(values: &[f64], sigma2: f64, log_eps: f64) -> TestReport {
    let n = values.len();
    if sigma2 < DEGENERATE_SIGMA2 {
        let bound = 5.0 / (-log_eps).sqrt();
        let max = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut r = TestReport::new("clt", "max_abs_fluctuation", max, 0.0, bound, max < bound, n);
        r.notes.push(format!("degenerate model (sigma^2 = {sigma2:e}); bounded-fluctuation branch"));
        return r;
    }
    let cdf = normal_cdf(sigma2);
    let d = ks_statistic(values, &cdf);
    let tol = KS_SLACK * ks_critical_1pct(n);
    let mut r = TestReport::new("clt", "ks_distance", d, 0.0, tol, d < tol, n);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    r.table = (0..CDF_ROWS)
        .map(|i| {
            let q = (i as f64 + 0.5) / CDF_ROWS as f64;
            let x = sorted[((q * n as f64) as usize).min(n - 1)];
            let f = cdf(x);
            TableRow { statistic: x, empirical: q, reference: f, band_low: (f - tol).max(0.0), band_high: (f + tol).min(1.0) }
        })
        .collect();
    r.notes.push(format!("sigma^2 = {sigma2}"));
    r
}

pub fn median_from_samples(values: &[f64]) -> TestReport {
    let n = values.len();
    let below = values.iter().filter(|&&v| v <= 0.0).count();
    let frac = below as f64 / n as f64;
    let (lo, hi) = wilson_interval(below, n);
    let pass = (lo <= 0.5 && 0.5 <= hi) || (frac - 0.5).abs() < MEDIAN_TOL;
    let mut r = TestReport::new("median", "fraction_nonpositive", frac, 0.5, MEDIAN_TOL, pass, n);
    r.table = vec![TableRow { statistic: 0.0, empirical: frac, reference: 0.5, band_low: lo, band_high: hi }];
    r
}

pub fn arcsine_from_paths(paths: &[Vec<f64>], t_grid: &[f64]) -> TestReport {
    let occ: Vec<f64> = paths.iter().map(|p| occupation_time(p, t_grid)).collect();
    let d = ks_statistic(&occ, arcsine_cdf);
    let mut r = TestReport::new("arcsine", "ks_distance", d, 0.0, ARCSINE_TOL, d < ARCSINE_TOL, paths.len());
    let n = occ.len() as f64;
    r.table = uniform_grid(101)
        .into_iter()
        .map(|u| {
            let emp = occ.iter().filter(|&&v| v <= u).count() as f64 / n;
            let f = arcsine_cdf(u);
            TableRow { statistic: u, empirical: emp, reference: f, band_low: (f - ARCSINE_TOL).max(0.0), band_high: (f + ARCSINE_TOL).min(1.0) }
        })
        .collect();
    r
}

/// Compares `P(sup path / sigma <= b)` with simulated Brownian paths on the same grid.
pub fn maximum_from_paths(paths: &[Vec<f64>], t_grid: &[f64], sigma2: f64, b_grid: &[f64], seed: u64) -> TestReport {
    let emp = sup_fractions(paths, sigma2.sqrt(), b_grid);
    let mut rng = sample_rng(seed, u64::MAX);
    let oracle_paths = brownian_oracle(&mut rng, ORACLE_PATHS, t_grid, 1.0);
    let oracle = sup_fractions(&oracle_paths, 1.0, b_grid);
    let gap = emp.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut r = TestReport::new("maximum", "max_abs_gap_to_oracle", gap, 0.0, MAXIMUM_TOL, gap <= MAXIMUM_TOL, paths.len());
    for (i, &b) in b_grid.iter().enumerate() {
        r.table.push(TableRow {
            statistic: b,
            empirical: emp[i],
            reference: oracle[i],
            band_low: (oracle[i] - MAXIMUM_TOL).max(0.0),
            band_high: (oracle[i] + MAXIMUM_TOL).min(1.0),
        });
        r.notes.push(format!(
            "b = {b}: empirical {:.4}, oracle {:.4}, 2Phi(b)-1 = {:.4}, sup|W| law {:.4}, series from k = 1 {:.6} (gap {:+.4})",
            emp[i],
            oracle[i],
            sup_cdf(b),
            abs_sup_cdf(b),
            series_from_one(b),
            emp[i] - series_from_one(b)
        ));
    }
    r
}

pub fn clt_test(model: &GibbsModel, part: &MarkovPartition, cfg: &ExperimentConfig) -> Result<TestReport> {
    cfg.validate()?;
    let start = Instant::now();
    let points = draw_points(model, part, cfg)?;
    Ok(clt_on_points(model, part, cfg, &points)?.timed(start))
}

/// CLT report on already drawn points, with `N''` at the other scales and `N'`
/// at the largest one as notes.
pub fn clt_on_points(model: &GibbsModel, part: &MarkovPartition, cfg: &ExperimentConfig, points: &[CodedPoint]) -> Result<TestReport> {
    let start = Instant::now();
    let log_eps = cfg.smallest_log_eps();
    let values = birkhoff_endpoints(model, points, log_eps)?;
    let mut r = clt_from_samples(&values, model.sigma2, log_eps);
    for &eps in &cfg.eps_list[..cfg.eps_list.len() - 1] {
        let v = birkhoff_endpoints(model, points, eps.ln())?;
        r.notes.push(format!("eps = {eps:e}: N'' KS distance {:.4}", ks_statistic(&v, normal_cdf(model.sigma2))));
    }
    if model.sigma2 >= DEGENERATE_SIGMA2 {
        let log_big = cfg.eps_list[0].ln();
        let markov: Result<Vec<f64>> = points
            .par_iter()
            .map(|cp| fluctuation_value(model, part, cp, None, log_big, 1.0, ProcessKind::Markov))
            .collect();
        if let Ok(v) = markov {
            r.notes.push(format!(
                "eps = {:e}: N' KS distance {:.4}",
                cfg.eps_list[0],
                ks_statistic(&v, normal_cdf(model.sigma2))
            ));
        }
    }
    Ok(r.timed(start))
}

pub fn median_test(model: &GibbsModel, part: &MarkovPartition, cfg: &ExperimentConfig) -> Result<TestReport> {
    cfg.validate()?;
    refuse_degenerate(model.sigma2, "median test")?;
    let start = Instant::now();
    let points = draw_points(model, part, cfg)?;
    let values = birkhoff_endpoints(model, &points, cfg.smallest_log_eps())?;
    Ok(median_from_samples(&values).timed(start))
}

pub fn arcsine_test(model: &GibbsModel, part: &MarkovPartition, cfg: &ExperimentConfig) -> Result<TestReport> {
    cfg.validate()?;
    refuse_degenerate(model.sigma2, "arc-sine test")?;
    let start = Instant::now();
    let points = draw_points(model, part, cfg)?;
    let paths = paths_of(model, part, &points, cfg.smallest_log_eps(), &cfg.t_grid, ProcessKind::Birkhoff)?;
    Ok(arcsine_from_paths(&paths, &cfg.t_grid).timed(start))
}

pub fn maximum_test(model: &GibbsModel, part: &MarkovPartition, cfg: &ExperimentConfig, b_grid: &[f64]) -> Result<TestReport> {
    cfg.validate()?;
    refuse_degenerate(model.sigma2, "maximum test")?;
    let start = Instant::now();
    let points = draw_points(model, part, cfg)?;
    let paths = paths_of(model, part, &points, cfg.smallest_log_eps(), &cfg.t_grid, ProcessKind::Birkhoff)?;
    Ok(maximum_from_paths(&paths, &cfg.t_grid, model.sigma2, b_grid, cfg.seed).timed(start))
}

/// Checks `N_eps(t) = sqrt(2) N_{eps^2}(t / 2)` along `t_grid` for one point.
pub fn scale_invariance_check(
    model: &GibbsModel,
    part: &MarkovPartition,
    cp: &CodedPoint,
    log_eps: f64,
    t_grid: &[f64],
    kind: ProcessKind,
) -> Result<TestReport> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for &t in t_grid {
        let a = fluctuation_value(model, part, cp, None, log_eps, t, kind)?;
        let b = fluctuation_value(model, part, cp, None, 2.0 * log_eps, 0.5 * t, kind)?;
        worst = worst.max((a - std::f64::consts::SQRT_2 * b).abs());
    }
    Ok(TestReport::new("scale_invariance", "max_abs_deviation", worst, 0.0, 1e-12, worst < 1e-12, t_grid.len()).timed(start))
}

/// Batch-means estimate of the covariance of `(phi_1, phi_2)` from chain
/// orbits, using the model's window tables.
pub fn mc_covariance(model: &GibbsModel, n_orbits: usize, len: usize, batch: usize, seed: u64) -> Result<[[f64; 2]; 2]> {
    let core = &model.core;
    let (k, d) = (core.alphabet, model.tables.depth);
    let sampler = ChainSampler::new(core)?;
    let tail_m = core.tail_mod();
    let tail_d = k.pow(d as u32 - 1);
    let (t1, t2) = (&model.tables.phi1, &model.tables.phi2);
    let sums: Vec<[f64; 3]> = (0..n_orbits as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let word = sampler.word(&mut rng, d);
            let mut w = word.iter().fold(0, |a, &s| a * k + s);
            let mut u = w % core.n_states();
            let mut acc = [0.0; 3];
            let (mut b1, mut b2) = (0.0, 0.0);
            for step in 0..len {
                b1 += t1[w];
                b2 += t2[w];
                if (step + 1) % batch == 0 {
                    acc[0] += b1 * b1;
                    acc[1] += b1 * b2;
                    acc[2] += b2 * b2;
                    b1 = 0.0;
                    b2 = 0.0;
                }
                let s = sampler.step(&mut rng, u);
                u = successor(u, s, k, tail_m);
                w = (w % tail_d) * k + s;
            }
            acc
        })
        .collect();
    let batches = (n_orbits * (len / batch)) as f64 * batch as f64;
    let tot = sums.iter().fold([0.0; 3], |a, s| [a[0] + s[0], a[1] + s[1], a[2] + s[2]]);
    Ok([[tot[0] / batches, tot[1] / batches], [tot[1] / batches, tot[2] / batches]])
}

/// Pooled least-squares slope of `n_eps` against `-log eps`.
pub fn hitting_time_slope(points: &[CodedPoint], log_eps: &[f64]) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for cp in points {
        for &le in log_eps {
            let t = cp.hitting_times(le).ok_or_else(|| Error::Resolution("coded orbit too short".into()))?;
            xs.push(-le);
            ys.push(t.n_eps as f64);
        }
    }
    Ok(regression_slope(&xs, &ys))
}

pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean over points of `sup_t |N' - N''| sqrt(-log eps)`.
pub fn surrogate_gap(model: &GibbsModel, part: &MarkovPartition, points: &[CodedPoint], log_eps: f64, t_grid: &[f64]) -> Result<f64> {
    let norm = (-log_eps).sqrt();
    let gaps: Vec<f64> = points
        .par_iter()
        .map(|cp| {
            let a = fluctuation_path(model, part, cp, log_eps, t_grid, ProcessKind::Markov)?;
            let b = fluctuation_path(model, part, cp, log_eps, t_grid, ProcessKind::Birkhoff)?;
            Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) * norm)
        })
        .collect::<Result<_>>()?;
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_models::{PotentialSpec, SkewMap};
    use crate::markov_partition::{build_partition, DEFAULT_ANCHOR};
    use crate::thermodynamics::build_gibbs;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn bernoulli_skew() -> (GibbsModel, MarkovPartition) {
        let map = SkewMap::new(2, 0.0, 3, 1.5, 0.3).unwrap();
        let part = build_partition(&map, DEFAULT_ANCHOR).unwrap();
        (build_gibbs(&map, &PotentialSpec::bernoulli(&[0.25, 0.75], 3), 4).unwrap(), part)
    }

    fn gaussian(n: usize, sd: f64, shift: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); shift + sd * z }).collect()
    }

    #[test]
    fn lebesgue_birkhoff_paths_vanish() {
        let map = SkewMap::linear(2, 3).unwrap();
        let part = build_partition(&map, DEFAULT_ANCHOR).unwrap();
        let model = build_gibbs(&map, &PotentialSpec::NegLogDetJacobian { scale: 1.0 }, 2).unwrap();
        let points = draw_points_to(&model, &part, 1, 50, -30.0).unwrap();
        let paths = paths_of(&model, &part, &points, -30.0, &uniform_grid(21), ProcessKind::Birkhoff).unwrap();
        assert!(paths.iter().flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn every_process_starts_at_zero() {
        let (model, part) = bernoulli_skew();
        let points = draw_points_to(&model, &part, 2, 5, -8.0).unwrap();
        for cp in &points {
            for kind in [ProcessKind::Direct, ProcessKind::Markov, ProcessKind::Birkhoff] {
                assert!(fluctuation_value(&model, &part, cp, None, -8.0, 0.0, kind).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_identity_holds() {
        let (model, part) = bernoulli_skew();
        let points = draw_points_to(&model, &part, 3, 4, -40.0).unwrap();
        for cp in &points {
            for kind in [ProcessKind::Markov, ProcessKind::Birkhoff] {
                let r = scale_invariance_check(&model, &part, cp, -20.0, &uniform_grid(11), kind).unwrap();
                assert!(r.pass, "{kind:?} {}", r.empirical);
            }
        }
    }

    #[test]
    fn negative_controls_fail() {
        let values = gaussian(4000, 1.0, 0.0, 4);
        assert!(clt_from_samples(&values, 1.0, -40.0).pass);
        assert!(!clt_from_samples(&values, 2.0, -40.0).pass);
        assert!(median_from_samples(&values).pass);
        assert!(!median_from_samples(&gaussian(4000, 1.0, 0.2, 5)).pass);
    }

    #[test]
    fn degenerate_branch_bounds_fluctuations() {
        let small = vec![0.1 / 40f64.sqrt(); 10];
        assert!(clt_from_samples(&small, 0.0, -40.0).pass);
        assert!(!clt_from_samples(&[1.0], 0.0, -40.0).pass);
    }

    #[test]
    fn draws_do_not_depend_on_thread_count() {
        let (model, part) = bernoulli_skew();
        let draw = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let pts = draw_points_to(&model, &part, 11, 64, -20.0).unwrap();
                birkhoff_endpoints(&model, &pts, -20.0).unwrap()
            })
        };
        let a = draw(1);
        let b = draw(4);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn batch_covariance_matches_green_kubo() {
        let (model, _) = bernoulli_skew();
        let q = mc_covariance(&model, 200, 5000, 250, 6).unwrap();
        let scale = model.q[0][0] + model.q[1][1];
        for i in 0..2 {
            for j in 0..2 {
                assert!((q[i][j] - model.q[i][j]).abs() < 0.15 * scale, "{q:?} {:?}", model.q);
            }
        }
    }

    #[test]
    fn fiber_hitting_time_grows_at_rate_one_over_lambda() {
        let map = SkewMap::linear(2, 3).unwrap();
        let part = build_partition(&map, DEFAULT_ANCHOR).unwrap();
        let model = build_gibbs(&map, &PotentialSpec::NegLogDetJacobian { scale: 1.0 }, 2).unwrap();
        let points = draw_points_to(&model, &part, 7, 20, -60.0).unwrap();
        let scales: Vec<f64> = (0..50).map(|i| -10.0 - 1.0137 * i as f64).collect();
        let slope = hitting_time_slope(&points, &scales).unwrap();
        assert!((slope - model.time_scales().0).abs() < 0.01 * model.time_scales().0, "{slope}");
    }

    #[test]
    fn regression_recovers_a_line() {
        assert!((regression_slope(&[1.0, 2.0, 3.0], &[2.0, 4.5, 7.0]) - 2.5).abs() < 1e-12);
    }
}
