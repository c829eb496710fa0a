use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal1d::{build_gibbs_1d, clt_experiment_1d};
use crate::error::{Error, Result};
use crate::map_models::{PotentialSpec, SkewMap, TorusPoint};
use crate::markov_partition::{build_partition, CodedPoint, MarkovPartition};
use crate::sampling_stats::{
    arcsine_from_paths, birkhoff_endpoints, clt_on_points, covariance_report, direct_markov_report, draw_points,
    draw_points_to, hitting_slope_report, maximum_from_paths, median_from_samples, paths_of, refuse_degenerate,
    scale_invariance_check, surrogate_trend_report, ProcessKind, TestReport, DEGENERATE_SIGMA2,
};
use crate::thermodynamics::{build_gibbs_on, variance_closed_form, variance_eigen_form, GibbsModel, GibbsOptions};

use super::config::{Mode, RunConfig, SCHEMA_VERSION};
use super::render::report_render;

pub const DEFAULT_OUT_DIR: &str = "ballfluct-out";
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the config's `out_dir`.
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub no_cache: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub reason: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSummary {
    Skew {
        depth: usize,
        pressure: f64,
        delta: f64,
        delta_u: f64,
        delta_uu: f64,
        lambda_u: f64,
        lambda_uu: f64,
        h_mu: f64,
        sigma2: f64,
        q: [[f64; 2]; 2],
        gk_terms: usize,
    },
    Circle {
        depth: usize,
        pressure: f64,
        delta: f64,
        lambda: f64,
        h: f64,
        sigma_u2: f64,
        sigma2: f64,
        gk_terms: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// The configuration as parsed; rerunning it reproduces this report.
    pub config: Option<RunConfig>,
    pub model: Option<ModelSummary>,
    pub tests: Vec<TestReport>,
    pub all_pass: bool,
    pub error: Option<Failure>,
    /// SHA-256 of the report with run times zeroed, in git blob framing.
    pub artifact_hash: String,
}

pub struct RunOutcome {
    pub exit_code: i32,
    pub report: RunReport,
    pub out_dir: PathBuf,
}

struct Executed {
    model: Option<ModelSummary>,
    tests: Vec<TestReport>,
    paths: Option<Vec<Vec<f64>>>,
}

/// Reads `config_path`, runs it and writes the report files.
pub fn run(config_path: &Path, opts: &RunOptions) -> RunOutcome {
    let parsed = fs::read_to_string(config_path).map_err(Error::from).and_then(|t| RunConfig::from_json(&t));
    match parsed {
        Ok(cfg) => run_config(&cfg, opts),
        Err(e) => {
            let out_dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            finish(None, Err(e), out_dir)
        }
    }
}

pub fn run_config(cfg: &RunConfig, opts: &RunOptions) -> RunOutcome {
    let out_dir = opts.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let cache = (!opts.no_cache).then(|| out_dir.join("cache"));
    let result = cfg.validate().and_then(|_| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| execute(cfg, cache.as_deref()))
    });
    finish(Some(cfg.clone()), result, out_dir)
}

fn finish(cfg: Option<RunConfig>, result: Result<Executed>, out_dir: PathBuf) -> RunOutcome {
    let (model, tests, paths, error, code) = match result {
        Ok(x) => {
            let code = if x.tests.iter().all(|t| t.pass) { 0 } else { 1 };
            (x.model, x.tests, x.paths, None, code)
        }
        Err(e) => {
            let code = if e.is_validation() { 2 } else { 3 };
            (None, Vec::new(), None, Some(Failure { reason: e.reason().into(), message: e.to_string() }), code)
        }
    };
    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        model,
        all_pass: error.is_none() && tests.iter().all(|t| t.pass),
        tests,
        error,
        artifact_hash: String::new(),
    };
    report.artifact_hash = artifact_hash(&report);
    let write = write_outputs(&report, paths.as_deref(), &out_dir);
    let exit_code = match write {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.reason());
            code.max(3)
        }
    };
    RunOutcome { exit_code, report, out_dir }
}

fn artifact_hash(report: &RunReport) -> String {
    let mut r = report.clone();
    r.artifact_hash.clear();
    for t in &mut r.tests {
        t.runtime_s = 0.0;
    }
    let body = serde_json::to_vec(&r).expect("reports serialize");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()));
    h.update(&body);
    hex::encode(h.finalize())
}

fn write_outputs(report: &RunReport, paths: Option<&[Vec<f64>]>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    let rendered = report_render(report);
    fs::write(dir.join("report.txt"), rendered.text)?;
    for (name, csv) in rendered.tables {
        fs::write(dir.join(name), csv)?;
    }
    if let (Some(paths), Some(cfg)) = (paths, &report.config) {
        let mut csv = String::from("sample_id,t,value\n");
        for (i, p) in paths.iter().enumerate() {
            for (t, v) in cfg.experiment.t_grid.iter().zip(p) {
                csv.push_str(&format!("{i},{t},{v}\n"));
            }
        }
        fs::write(dir.join("paths.csv"), csv)?;
    }
    Ok(())
}

fn cache_key(map: &SkewMap, anchor: TorusPoint, potential: &PotentialSpec, depth: usize) -> String {
    let key = serde_json::json!({ "version": CACHE_VERSION, "map": map, "anchor": anchor, "potential": potential, "depth": depth });
    hex::encode(Sha256::digest(key.to_string()))
}

/// The model from the cache when present, else built and stored.
fn load_or_build(cfg: &RunConfig, part: &MarkovPartition, cache: Option<&Path>) -> Result<GibbsModel> {
    let file = cache.map(|d| d.join(format!("{}.json", cache_key(part.map(), cfg.anchor(), &cfg.potential, cfg.depth))));
    if let Some(f) = &file {
        if let Some(mut model) = fs::read(f).ok().and_then(|b| serde_json::from_slice::<GibbsModel>(&b).ok()) {
            model.restore_tables(part);
            return Ok(model);
        }
    }
    let model = build_gibbs_on(part, &cfg.potential, GibbsOptions::new(cfg.depth))?;
    if let Some(f) = &file {
        fs::create_dir_all(f.parent().expect("cache file has a directory"))?;
        fs::write(f, serde_json::to_vec(&model)?)?;
    }
    Ok(model)
}

fn summary(model: &GibbsModel) -> ModelSummary {
    ModelSummary::Skew {
        depth: model.depth,
        pressure: model.pressure,
        delta: model.delta,
        delta_u: model.delta_u,
        delta_uu: model.delta_uu,
        lambda_u: model.lambda_u,
        lambda_uu: model.lambda_uu,
        h_mu: model.h_mu,
        sigma2: model.sigma2,
        q: model.q,
        gk_terms: model.gk_terms,
    }
}

fn execute(cfg: &RunConfig, cache: Option<&Path>) -> Result<Executed> {
    if cfg.mode == Mode::Conformal1d {
        let start = Instant::now();
        let g = build_gibbs_1d(&cfg.circle_map()?, &cfg.potential, cfg.depth)?;
        let mut tests = clt_experiment_1d(&g, &cfg.experiment)?;
        tests[0].runtime_s = start.elapsed().as_secs_f64();
        let model = ModelSummary::Circle {
            depth: g.depth,
            pressure: g.pressure,
            delta: g.delta,
            lambda: g.lambda,
            h: g.h,
            sigma_u2: g.sigma_u2,
            sigma2: g.sigma2,
            gk_terms: g.gk_terms,
        };
        return Ok(Executed { model: Some(model), tests, paths: None });
    }
    let part = build_partition(&cfg.skew_map()?, cfg.anchor())?;
    let model = load_or_build(cfg, &part, cache)?;
    let mode = cfg.mode;
    let all = mode == Mode::All;
    let exp = &cfg.experiment;
    let mut tests = Vec::new();
    if mode == Mode::Thermo || all {
        tests.extend(thermo_reports(&model, &part)?);
    }
    let degenerate = model.sigma2 < DEGENERATE_SIGMA2;
    let wants = |m: Mode| mode == m || (all && (m == Mode::Clt || !degenerate));
    for (m, name) in [(Mode::Median, "median test"), (Mode::Arcsine, "arc-sine test"), (Mode::Maximum, "maximum test")] {
        if mode == m {
            refuse_degenerate(model.sigma2, name)?;
        }
    }
    let mut paths = None;
    if [Mode::Clt, Mode::Median, Mode::Arcsine, Mode::Maximum].into_iter().any(wants) {
        let start = Instant::now();
        let points = draw_points(&model, &part, exp)?;
        let log_eps = exp.smallest_log_eps();
        if wants(Mode::Clt) {
            tests.push(clt_on_points(&model, &part, exp, &points)?);
        }
        if wants(Mode::Median) {
            let values = birkhoff_endpoints(&model, &points, log_eps)?;
            tests.push(timed(median_from_samples(&values), start));
        }
        if wants(Mode::Arcsine) || wants(Mode::Maximum) {
            let p = paths_of(&model, &part, &points, log_eps, &exp.t_grid, exp.process_kind)?;
            if wants(Mode::Arcsine) {
                tests.push(timed(arcsine_from_paths(&p, &exp.t_grid), start));
            }
            if wants(Mode::Maximum) {
                tests.push(timed(maximum_from_paths(&p, &exp.t_grid, model.sigma2, &cfg.b_grid, exp.seed), start));
            }
            paths = cfg.write_paths.then_some(p);
        }
    }
    if mode == Mode::Diagnostics || all {
        tests.extend(diagnostic_reports(cfg, &model, &part)?);
    }
    Ok(Executed { model: Some(summary(&model)), tests, paths })
}

fn timed(mut r: TestReport, start: Instant) -> TestReport {
    r.runtime_s = start.elapsed().as_secs_f64();
    r
}

fn thermo_reports(model: &GibbsModel, part: &MarkovPartition) -> Result<Vec<TestReport>> {
    let start = Instant::now();
    let (t1, t2) = model.time_scales();
    let eigen = variance_eigen_form(model.q, t1, t2);
    let closed = variance_closed_form(model.q, t1, t2);
    let tol = 1e-10 * closed.abs().max(1.0);
    let forms = TestReport::new("variance_forms", "eigen_form", eigen, closed, tol, (eigen - closed).abs() <= tol, 1);
    let (r1, r2) = model.centering_residuals();
    let worst = r1.abs().max(r2.abs());
    let centering = TestReport::new("centering", "max_abs_integral", worst, 0.0, 1e-8, worst <= 1e-8, 2);
    let d = model.degeneracy_test(part)?;
    let mut degeneracy = TestReport::new("degeneracy", "sigma2", model.sigma2, 0.0, DEGENERATE_SIGMA2, true, 1);
    degeneracy.notes.push(format!(
        "degenerate: {}; absolutely continuous potential has pressure {:e} and its measure lies at total variation {:e}",
        d.degenerate, d.acim_pressure, d.acim_distance
    ));
    Ok(vec![timed(forms, start), timed(centering, start), timed(degeneracy, start)])
}

fn diagnostic_reports(cfg: &RunConfig, model: &GibbsModel, part: &MarkovPartition) -> Result<Vec<TestReport>> {
    let exp = &cfg.experiment;
    let log_eps = exp.smallest_log_eps();
    let mut out = Vec::new();
    let points = draw_points_to(model, part, exp.seed, exp.n_samples, 2.0 * log_eps)?;
    out.push(scale_invariance(model, part, &points[..points.len().min(4)], log_eps, &exp.t_grid)?);
    let logs: Vec<f64> = exp.eps_list.iter().map(|e| e.ln()).collect();
    out.push(hitting_slope_report(model, &points, &logs)?);
    if exp.eps_list.len() >= 2 {
        out.push(surrogate_trend_report(model, part, &points, &exp.eps_list, &exp.t_grid)?);
    }
    out.push(covariance_report(model, cfg.cov_orbits, cfg.cov_len, cfg.cov_batch, exp.seed)?);
    if cfg.direct_points > 0 {
        let direct = &points[..points.len().min(cfg.direct_points)];
        out.push(direct_markov_report(model, part, direct, exp.eps_list[0])?);
    }
    Ok(out)
}

fn scale_invariance(
    model: &GibbsModel,
    part: &MarkovPartition,
    points: &[CodedPoint],
    log_eps: f64,
    t_grid: &[f64],
) -> Result<TestReport> {
    let start = Instant::now();
    let mut worst = TestReport::new("scale_invariance", "max_abs_deviation", 0.0, 0.0, 1e-12, true, 0);
    for cp in points {
        for kind in [ProcessKind::Markov, ProcessKind::Birkhoff] {
            let r = scale_invariance_check(model, part, cp, log_eps, t_grid, kind)?;
            worst.empirical = worst.empirical.max(r.empirical);
            worst.sample_size += r.sample_size;
        }
    }
    worst.pass = worst.empirical < worst.tolerance;
    Ok(timed(worst, start))
}
