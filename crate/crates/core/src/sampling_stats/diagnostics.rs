//! Cross-checks of the surrogate chain and of the operator covariance.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov_partition::{CodedPoint, MarkovPartition};
use crate::thermodynamics::GibbsModel;

use super::ball::{ball_measure, BallOptions};
use super::experiments::{hitting_time_slope, mc_covariance, surrogate_gap, TableRow, TestReport};
use super::paths::log_markov_measure;

pub const SLOPE_TOL: f64 = 0.02;
pub const TREND_TOL: f64 = 0.10;
pub const COVARIANCE_TOL: f64 = 0.05;
/// Entries of `Q` below this size are reported but not compared.
pub const COVARIANCE_FLOOR: f64 = 1e-3;

/// Relative error of the pooled `n_eps` slope against `1 / lambda_uu`.
pub fn hitting_slope_report(model: &GibbsModel, points: &[CodedPoint], log_eps: &[f64]) -> Result<TestReport> {
    let start = Instant::now();
    let slope = hitting_time_slope(points, log_eps)?;
    let want = model.time_scales().0;
    let rel = (slope - want).abs() / want;
    let mut r = TestReport::new("hitting_slope", "relative_error", rel, 0.0, SLOPE_TOL, rel < SLOPE_TOL, points.len());
    r.notes.push(format!("slope {slope:.6}, 1/lambda_uu = {want:.6}"));
    Ok(r.timed(start))
}

/// `sup_t |N' - N''| sqrt(-log eps)` over decreasing scales; passes when no
/// step grows by more than `TREND_TOL`.
pub fn surrogate_trend_report(
    model: &GibbsModel,
    part: &MarkovPartition,
    points: &[CodedPoint],
    eps_list: &[f64],
    t_grid: &[f64],
) -> Result<TestReport> {
    let start = Instant::now();
    let gaps = eps_list
        .iter()
        .map(|&e| surrogate_gap(model, part, points, e.ln(), t_grid))
        .collect::<Result<Vec<f64>>>()?;
    let worst = gaps.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    let mut r = TestReport::new("surrogate_trend", "max_step_ratio", worst, 1.0, 1.0 + TREND_TOL, worst <= 1.0 + TREND_TOL, points.len());
    r.table = eps_list
        .iter()
        .zip(&gaps)
        .map(|(&e, &g)| TableRow { statistic: -e.log2(), empirical: g, reference: gaps[0], band_low: 0.0, band_high: gaps[0] * (1.0 + TREND_TOL) })
        .collect();
    for (e, g) in eps_list.iter().zip(&gaps) {
        r.notes.push(format!("eps = {e:e}: mean scaled gap {g:.4}"));
    }
    Ok(r.timed(start))
}

/// Batch-means covariance against the Green-Kubo `Q`, relative per entry.
pub fn covariance_report(model: &GibbsModel, n_orbits: usize, len: usize, batch: usize, seed: u64) -> Result<TestReport> {
    let start = Instant::now();
    let mc = mc_covariance(model, n_orbits, len, batch, seed)?;
    let mut worst = 0.0f64;
    let mut r = TestReport::new("covariance", "max_relative_error", 0.0, 0.0, COVARIANCE_TOL, true, n_orbits);
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let (q, m) = (model.q[i][j], mc[i][j]);
        let rel = (m - q).abs() / q.abs();
        if q.abs() > COVARIANCE_FLOOR {
            worst = worst.max(rel);
        }
        r.notes.push(format!("Q[{i}][{j}]: operator {q:.6}, batch means {m:.6}"));
        r.table.push(TableRow {
            statistic: (2 * i + j) as f64,
            empirical: m,
            reference: q,
            band_low: q - COVARIANCE_TOL * q.abs(),
            band_high: q + COVARIANCE_TOL * q.abs(),
        });
    }
    r.empirical = worst;
    r.pass = worst < COVARIANCE_TOL;
    Ok(r.timed(start))
}

/// `|N_eps(1) - N'_eps(1)|` against the sandwich allowance
/// `(delta log c + log(upper / lower)) / sqrt(-log eps)`, where `c` is the
/// measured sandwich ratio and `upper / lower` the ball bracket.
pub fn direct_markov_report(model: &GibbsModel, part: &MarkovPartition, points: &[CodedPoint], eps: f64) -> Result<TestReport> {
    let start = Instant::now();
    let norm = (-eps.ln()).sqrt();
    let rows = points
        .par_iter()
        .map(|cp| {
            let ball = ball_measure(model, part, cp.point(), eps, &BallOptions::default())?;
            let markov = log_markov_measure(model, part, cp, eps.ln())?;
            let s = part.sandwich_check_coded(cp, eps);
            if s.exhausted {
                return Err(Error::Resolution("sandwich scan exhausted".into()));
            }
            let c = (1.0 / s.c_low).max(s.c_up).ln();
            let allowance = (model.delta * c + (ball.upper / ball.lower).ln()) / norm;
            Ok(((ball.mid().ln() - markov).abs() / norm, allowance))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let worst = rows.iter().map(|(d, a)| d / a).fold(0.0, f64::max);
    let mut r = TestReport::new("direct_vs_markov", "max_gap_over_allowance", worst, 0.0, 1.0, worst <= 1.0, points.len());
    r.table = rows
        .iter()
        .enumerate()
        .map(|(i, &(d, a))| TableRow { statistic: i as f64, empirical: d, reference: 0.0, band_low: 0.0, band_high: a })
        .collect();
    let mean_gap = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
    r.notes.push(format!("eps = {eps:e}: mean |N - N'| = {mean_gap:.4}"));
    Ok(r.timed(start))
}
