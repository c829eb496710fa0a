//! Reference laws, goodness-of-fit statistics and the Brownian oracle.

use rand::Rng;
use rand_distr::StandardNormal;

/// Two-sided Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        // ties: jump over the whole block
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// 1% asymptotic critical value of the KS distance.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// CDF of `N(0, sigma2)`; a step at 0 when `sigma2 == 0`.
pub fn normal_cdf(sigma2: f64) -> impl Fn(f64) -> f64 {
    let scale = (2.0 * sigma2).sqrt();
    move |x| {
        if sigma2 > 0.0 {
            0.5 * libm::erfc(-x / scale)
        } else {
            f64::from(u8::from(x >= 0.0))
        }
    }
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    normal_cdf(1.0)(x)
}

/// Arc-sine law `2/pi asin(sqrt(u))` on `[0, 1]`.
pub fn arcsine_cdf(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        std::f64::consts::FRAC_2_PI * u.sqrt().asin()
    }
}

/// `P(sup_{[0,1]} W <= b) = 2 Phi(b) - 1`.
pub fn sup_cdf(b: f64) -> f64 {
    if b <= 0.0 {
        0.0
    } else {
        2.0 * standard_normal_cdf(b) - 1.0
    }
}

fn odd_theta_sum(b: f64, first: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let mut sum = 0.0;
    for k in first..200 {
        let odd = (2 * k + 1) as f64;
        let term = (-pi * pi * odd * odd / (8.0 * b * b)).exp() / odd;
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    sum
}

/// `P(sup_{[0,1]} |W| <= b) = 4/pi sum_{k>=0} (-1)^k/(2k+1) exp(-pi^2 (2k+1)^2 / (8 b^2))`.
pub fn abs_sup_cdf(b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    4.0 / std::f64::consts::PI * odd_theta_sum(b, 0)
}

/// `1 - 4/pi sum_{k>=1} (-1)^k/(2k+1) exp(-pi^2 (2k+1)^2 / (8 b^2))`, the series
/// with the sum from k = 1. It tends to 4/pi, so it is not a distribution function.
pub fn series_from_one(b: f64) -> f64 {
    if b <= 0.0 {
        return f64::NAN;
    }
    1.0 - 4.0 / std::f64::consts::PI * odd_theta_sum(b, 1)
}

/// Lebesgue measure of `{t : path(t) < 0}` by trapezoid counting on the
/// grid; grid values exactly at 0 count for one half.
pub fn occupation_time(values: &[f64], t_grid: &[f64]) -> f64 {
    let side = |v: f64| {
        if v < 0.0 {
            1.0
        } else if v == 0.0 {
            0.5
        } else {
            0.0
        }
    };
    values
        .windows(2)
        .zip(t_grid.windows(2))
        .map(|(v, t)| 0.5 * (side(v[0]) + side(v[1])) * (t[1] - t[0]))
        .sum()
}

/// Paths of `sqrt(sigma2) W` on `t_grid` from independent Gaussian increments.
pub fn brownian_oracle<R: Rng + ?Sized>(rng: &mut R, n_paths: usize, t_grid: &[f64], sigma2: f64) -> Vec<Vec<f64>> {
    let sd = sigma2.sqrt();
    (0..n_paths)
        .map(|_| {
            let mut path = Vec::with_capacity(t_grid.len());
            let mut w = 0.0;
            let mut last = 0.0;
            for &t in t_grid {
                let z: f64 = rng.sample(StandardNormal);
                w += sd * (t - last).sqrt() * z;
                last = t;
                path.push(w);
            }
            path
        })
        .collect()
}

/// Empirical `P(max path / scale <= b)` for each `b`.
pub fn sup_fractions(paths: &[Vec<f64>], scale: f64, b_grid: &[f64]) -> Vec<f64> {
    let sups: Vec<f64> = paths.iter().map(|p| p.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / scale).collect();
    b_grid
        .iter()
        .map(|&b| sups.iter().filter(|&&s| s <= b).count() as f64 / sups.len() as f64)
        .collect()
}

/// `(low, high)` of the 99% Wilson interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    let z = 2.5758293035489004;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_of_exact_quantiles_is_half_step() {
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_handles_ties() {
        let d = ks_statistic(&[0.0; 10], normal_cdf(1.0));
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reference_laws() {
        assert_eq!(arcsine_cdf(1.0), 1.0);
        assert!((arcsine_cdf(0.5) - 0.5).abs() < 1e-15);
        assert!((sup_cdf(1.0) - 0.6826894921370859).abs() < 1e-12);
        assert_eq!(sup_cdf(0.0), 0.0);
        assert!((abs_sup_cdf(1.0) - 0.370777).abs() < 1e-5);
        assert!(abs_sup_cdf(10.0) > 0.999_999);
        assert!(abs_sup_cdf(1.0) < sup_cdf(1.0));
        // differs from the sup|W| law by its k = 0 term
        let pi = std::f64::consts::PI;
        assert!((series_from_one(1.0) - (1.0 + 4.0 / (3.0 * pi) * (-9.0 * pi * pi / 8.0).exp())).abs() < 1e-12);
        for b in [0.5, 1.0, 2.0] {
            let lead = 4.0 / pi * (-pi * pi / (8.0 * b * b)).exp();
            assert!((series_from_one(b) - (1.0 - abs_sup_cdf(b) + lead)).abs() < 1e-12);
        }
    }

    #[test]
    fn occupation_time_of_signs() {
        let t: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        assert_eq!(occupation_time(&[0.0, -1.0, -1.0, -1.0, -1.0], &t), 0.9375);
        assert_eq!(occupation_time(&[0.0, 1.0, 1.0, 1.0, 1.0], &t), 0.0625);
        assert_eq!(occupation_time(&[-1.0, -1.0, 1.0, 1.0, 1.0], &t), 0.375);
    }

    #[test]
    fn oracle_endpoint_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let s2 = 0.7;
        let n = 100_000;
        let paths = brownian_oracle(&mut rng, n, &grid, s2);
        let ends: Vec<f64> = paths.iter().map(|p| p[10]).collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - s2).abs() < 3.0 * s2 * (2.0 / n as f64).sqrt());
        assert!(mean.abs() < 4.0 * (s2 / n as f64).sqrt());
        assert!(paths.iter().all(|p| p[0] == 0.0));
    }

    #[test]
    fn oracle_occupation_times_follow_arcsine() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let paths = brownian_oracle(&mut rng, 10_000, &grid, 1.0);
        let occ: Vec<f64> = paths.iter().map(|p| occupation_time(p, &grid)).collect();
        assert!(ks_statistic(&occ, arcsine_cdf) < 0.03);
    }

    #[test]
    fn wilson_contains_truth() {
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(lo < 0.5 && hi > 0.5 && hi - lo < 0.09);
    }
}
