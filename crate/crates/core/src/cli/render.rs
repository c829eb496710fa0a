use std::fmt::Write;

use crate::sampling_stats::TestReport;

use super::run::{ModelSummary, RunReport};

pub const CSV_HEADER: &str = "statistic,empirical,reference,band_low,band_high";

pub struct Rendered {
    pub text: String,
    /// `(file name, contents)` for each test with a table.
    pub tables: Vec<(String, String)>,
}

/// Table rows of all `tests`, one line each under a single header.
pub fn render_csv(tests: &[TestReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in tests.iter().flat_map(|t| &t.table) {
        writeln!(out, "{},{},{},{},{}", row.statistic, row.empirical, row.reference, row.band_low, row.band_high).unwrap();
    }
    out
}

fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        format!("{x}")
    } else if x.abs() < 1e-3 || x.abs() >= 1e6 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

pub fn render_text(report: &RunReport) -> String {
    let mut out = String::new();
    let mode = report.config.as_ref().map_or("unknown".to_string(), |c| format!("{:?}", c.mode).to_lowercase());
    writeln!(out, "ballfluct run: mode {mode}").unwrap();
    match &report.model {
        Some(ModelSummary::Skew { pressure, delta, delta_u, delta_uu, lambda_u, lambda_uu, h_mu, sigma2, q, .. }) => {
            writeln!(out, "model: pressure {pressure:.10}, delta {delta:.10} (delta_u {delta_u:.6}, delta_uu {delta_uu:.6})").unwrap();
            writeln!(out, "       lambda_u {lambda_u:.10}, lambda_uu {lambda_uu:.10}, h {h_mu:.10}").unwrap();
            writeln!(out, "       sigma^2 {sigma2:.6e}, Q = [[{:.6e}, {:.6e}], [{:.6e}, {:.6e}]]", q[0][0], q[0][1], q[1][0], q[1][1]).unwrap();
        }
        Some(ModelSummary::Circle { pressure, delta, lambda, h, sigma_u2, sigma2, .. }) => {
            writeln!(out, "model: pressure {pressure:.10}, delta {delta:.10}, lambda {lambda:.10}, h {h:.10}").unwrap();
            writeln!(out, "       sigma_u^2 {sigma_u2:.6e}, sigma^2 {sigma2:.6e}").unwrap();
        }
        None => {}
    }
    for t in &report.tests {
        writeln!(
            out,
            "{} {}: {} = {} (reference {}, tolerance {}, n = {}, {:.2} s)",
            if t.pass { "PASS" } else { "FAIL" },
            t.name,
            t.statistic,
            num(t.empirical),
            num(t.reference),
            num(t.tolerance),
            t.sample_size,
            t.runtime_s
        )
        .unwrap();
        for n in &t.notes {
            writeln!(out, "    {n}").unwrap();
        }
    }
    let failed = report.tests.iter().filter(|t| !t.pass).count();
    match &report.error {
        Some(e) => writeln!(out, "error [{}]: {}", e.reason, e.message).unwrap(),
        None if failed == 0 => writeln!(out, "result: all {} tests passed", report.tests.len()).unwrap(),
        None => writeln!(out, "result: {failed} of {} tests failed", report.tests.len()).unwrap(),
    }
    out
}

pub fn report_render(report: &RunReport) -> Rendered {
    let tables = report
        .tests
        .iter()
        .filter(|t| !t.table.is_empty())
        .map(|t| (format!("{}.csv", t.name), render_csv(std::slice::from_ref(t))))
        .collect();
    Rendered { text: render_text(report), tables }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling_stats::{arcsine_cdf, arcsine_from_paths, clt_from_samples, uniform_grid, CDF_ROWS};

    #[test]
    fn numbers_are_compact() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1e-10), "1.000e-10");
        assert_eq!(num(0.12224999999999998), "0.122250");
    }

    #[test]
    fn empty_list_gives_header_only() {
        assert_eq!(render_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn clt_table_has_fixed_rows() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64 - 499.5) / 300.0).collect();
        let csv = render_csv(&[clt_from_samples(&values, 1.0, -40.0)]);
        assert_eq!(csv.lines().count(), CDF_ROWS + 1);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 5));
    }

    #[test]
    fn arcsine_table_uses_the_arcsine_law() {
        let grid = uniform_grid(11);
        let paths = vec![vec![1.0; 11], vec![-1.0; 11]];
        let r = arcsine_from_paths(&paths, &grid);
        for row in &r.table {
            assert_eq!(row.reference, arcsine_cdf(row.statistic));
        }
    }
}
