//! Synthetic regression studies: data generation, method sweeps over seeds,
//! and report files.

pub mod cli;
pub mod timing;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use faer::{Col, Mat};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{inconsistency_gap, kl_decomposition, mean_and_standard_error, mse, InconsistencyReport};
use crate::error::{Error, Result};
use crate::itergp::{closed_form_c_cg, closed_form_c_ev, closed_form_c_lanczos, default_krylov_dim};
use crate::kernels::{kernel_matrix, Dataset, KernelSpec, Points, Truth};
use crate::linalg::{Scaled, Shifted};
use crate::posterior::{write_predictions_csv, z_quantile, GPPosterior};
use crate::rng;
use crate::spectral::{cg_solve, lanczos, normalized_eig};

/// Noise level of both studies.
pub const STUDY_SIGMA: f64 = 0.2;
/// Matérn regularity of the first study (kernel and truth).
pub const MATERN_ALPHA: f64 = 0.6;
/// Truth regularity of the squared-exponential study.
pub const SQEXP_BETA: f64 = 0.8;

/// Simulation setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `X ~ U(0,1)`, `f0 = |x-0.4|^0.6 - |x-0.2|^0.6`, Matérn(0.6) prior.
    MaternStudy,
    /// `X ~ N(0,1)`, `f0 = |x+1|^0.8 - |x-1.5|^0.8`, squared exponential prior.
    SqexpStudy,
    /// Matérn design with the worst-case truth along the top eigenvector.
    InconsistencyDemo,
    /// Matérn study data, used for timings.
    TimingStudy,
    /// Design, truth and kernel taken from the config.
    Custom,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::MaternStudy => "matern_study",
            Scenario::SqexpStudy => "sqexp_study",
            Scenario::InconsistencyDemo => "inconsistency_demo",
            Scenario::TimingStudy => "timing_study",
            Scenario::Custom => "custom",
        }
    }

    /// Sample size used by `--quick`.
    pub fn quick_n(self) -> usize {
        match self {
            Scenario::SqexpStudy => 1000,
            _ => 600,
        }
    }
}

pub fn matern_truth(x: f64) -> f64 {
    (x - 0.4).abs().powf(0.6) - (x - 0.2).abs().powf(0.6)
}

pub fn sqexp_truth(x: f64) -> f64 {
    (x + 1.0).abs().powf(0.8) - (x - 1.5).abs().powf(0.8)
}

/// `b = 4 n^{-1/(1+2 beta)}`.
pub fn sqexp_bandwidth(n: usize) -> f64 {
    4.0 * (n as f64).powf(-1.0 / (1.0 + 2.0 * SQEXP_BETA))
}

/// Design distribution for custom scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Design {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

/// Regression function for custom scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Matern,
    Sqexp,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomScenario {
    pub design: Design,
    pub truth: TruthKind,
    pub sigma: f64,
}

impl Default for CustomScenario {
    fn default() -> Self {
        Self { design: Design::Uniform { lo: 0.0, hi: 1.0 }, truth: TruthKind::Matern, sigma: STUDY_SIGMA }
    }
}

fn draw_design(design: Design, n: usize, label: &str, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(label, n, seed, "design");
    (0..n)
        .map(|_| match design {
            Design::Uniform { lo, hi } => lo + (hi - lo) * r.random::<f64>(),
            Design::Normal { mean, sd } => mean + sd * r.sample::<f64, _>(StandardNormal),
        })
        .collect()
}

fn noisy(xs: Vec<f64>, truth: Truth, sigma: f64, label: &str, seed: u64) -> Result<Dataset> {
    let n = xs.len();
    let mut r = rng::stream(label, n, seed, "noise");
    let ys = xs.iter().map(|x| truth(&[*x]) + sigma * r.sample::<f64, _>(StandardNormal)).collect();
    Ok(Dataset::new(Points::from_scalars(&xs), ys, sigma)?.with_truth(truth))
}

/// Deterministic synthetic data for the built-in studies.
pub fn generate_data(scenario: Scenario, n: usize, seed: u64) -> Result<Dataset> {
    generate_data_with(scenario, n, seed, None)
}

pub fn generate_data_with(scenario: Scenario, n: usize, seed: u64, custom: Option<&CustomScenario>) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let label = scenario.label();
    match scenario {
        Scenario::MaternStudy | Scenario::TimingStudy => {
            let xs = draw_design(Design::Uniform { lo: 0.0, hi: 1.0 }, n, label, seed);
            noisy(xs, Arc::new(|x: &[f64]| matern_truth(x[0])), STUDY_SIGMA, label, seed)
        }
        Scenario::SqexpStudy => {
            let xs = draw_design(Design::Normal { mean: 0.0, sd: 1.0 }, n, label, seed);
            noisy(xs, Arc::new(|x: &[f64]| sqexp_truth(x[0])), STUDY_SIGMA, label, seed)
        }
        Scenario::Custom => {
            let c = custom.ok_or_else(|| Error::Config("custom scenario needs a `custom` block".into()))?;
            if !(c.sigma > 0.0) {
                return Err(Error::Config("custom sigma must be positive".into()));
            }
            let xs = draw_design(c.design, n, label, seed);
            let truth: Truth = match c.truth {
                TruthKind::Matern => Arc::new(|x: &[f64]| matern_truth(x[0])),
                TruthKind::Sqexp => Arc::new(|x: &[f64]| sqexp_truth(x[0])),
                TruthKind::Zero => Arc::new(|_: &[f64]| 0.0),
            };
            noisy(xs, truth, c.sigma, label, seed)
        }
        Scenario::InconsistencyDemo => Err(Error::Config(
            "the inconsistency demo builds its data inside `inconsistency_sweep`".into(),
        )),
    }
}

/// Prior used by each scenario.
pub fn scenario_kernel(scenario: Scenario, n: usize) -> KernelSpec {
    match scenario {
        Scenario::SqexpStudy => KernelSpec::sqexp(sqexp_bandwidth(n)),
        _ => KernelSpec::matern(MATERN_ALPHA),
    }
}

/// Starting vector of the Lanczos iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum V0Choice {
    /// `Y / |Y|`.
    #[default]
    Data,
    /// `Z / |Z|` with standard normal `Z`.
    Random,
}

/// Posterior to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Exact,
    Evgp { m: usize },
    Lgp {
        m: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        krylov_dim: Option<usize>,
        #[serde(default)]
        v0: V0Choice,
    },
    Cggp { m: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Evgp { .. } => "evgp",
            Method::Lgp { .. } => "lgp",
            Method::Cggp { .. } => "cggp",
        }
    }

    /// Number of actions; `n` for the exact posterior.
    pub fn m(&self, n: usize) -> usize {
        match *self {
            Method::Exact => n,
            Method::Evgp { m } | Method::Lgp { m, .. } | Method::Cggp { m } => m,
        }
    }

    pub fn label(&self, n: usize) -> String {
        match self {
            Method::Exact => "exact".into(),
            other => format!("{}_m{}", other.name(), other.m(n)),
        }
    }
}

/// Evaluation grid for bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
}

impl GridSpec {
    pub fn default_for(scenario: Scenario) -> Self {
        match scenario {
            Scenario::SqexpStudy => GridSpec { points: 400, lo: -3.0, hi: 3.0 },
            _ => GridSpec { points: 400, lo: 0.0, hi: 1.0 },
        }
    }

    pub fn build(&self) -> Points {
        let g = self.points.max(1);
        let step = if g > 1 { (self.hi - self.lo) / (g - 1) as f64 } else { 0.0 };
        Points::from_scalars(&(0..g).map(|i| self.lo + step * i as f64).collect::<Vec<_>>())
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_level() -> f64 {
    0.95
}

fn default_kl_max_n() -> usize {
    1000
}

/// One experiment: a scenario, a sample size and the methods to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Overrides the scenario's prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomScenario>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// KL to the exact posterior is computed only up to this `n`.
    #[serde(default = "default_kl_max_n")]
    pub kl_max_n: usize,
    /// Skip grid predictions and band files.
    #[serde(default)]
    pub skip_grid: bool,
}

/// Example config printed by the CLI when none is given.
pub const CONFIG_SCHEMA: &str = r#"{
  "scenario": "matern_study | sqexp_study | timing_study | custom",
  "n": 3000,
  "methods": [
    {"method": "exact"},
    {"method": "evgp", "m": 40},
    {"method": "lgp", "m": 40, "krylov_dim": 120, "v0": "data | random"},
    {"method": "cggp", "m": 80}
  ],
  "seeds": [0, 1, 2],
  "grid": {"points": 400, "lo": 0.0, "hi": 1.0},
  "output_dir": "out/matern",
  "kernel": {"kind": "matern", "alpha": 0.6},
  "custom": {"design": {"type": "uniform", "lo": 0.0, "hi": 1.0}, "truth": "matern", "sigma": 0.2},
  "level": 0.95,
  "kl_max_n": 1000,
  "skip_grid": false
}"#;

impl ExperimentConfig {
    pub fn new(scenario: Scenario, n: usize, methods: Vec<Method>, seeds: Vec<u64>) -> Self {
        Self {
            scenario,
            n,
            methods,
            seeds,
            grid: None,
            output_dir: None,
            kernel: None,
            custom: None,
            level: default_level(),
            kl_max_n: default_kl_max_n(),
            skip_grid: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.scenario == Scenario::InconsistencyDemo {
            return Err(Error::Config("use the demo-inconsistency command for this scenario".into()));
        }
        if self.scenario == Scenario::Custom && self.custom.is_none() {
            return Err(Error::Config("custom scenario needs a `custom` block".into()));
        }
        for method in &self.methods {
            let m = method.m(self.n);
            if m > self.n {
                return Err(Error::Config(format!("{} has m = {m} > n = {}", method.name(), self.n)));
            }
            if let Method::Lgp { krylov_dim: Some(k), .. } = method {
                if *k < m || *k > self.n {
                    return Err(Error::Config(format!("lgp krylov_dim {k} must lie in {m}..={}", self.n)));
                }
            }
        }
        if let Some(k) = &self.kernel {
            k.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        z_quantile(self.level).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        self.kernel.clone().unwrap_or_else(|| scenario_kernel(self.scenario, self.n))
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid.unwrap_or_else(|| GridSpec::default_for(self.scenario))
    }
}

/// A posterior together with the time its fit took.
pub struct Fit<'a> {
    pub posterior: GPPosterior<'a>,
    /// Fit time in milliseconds, kernel assembly excluded.
    pub wall_ms: f64,
}

/// Fits `method` given the assembled kernel matrix `k` of `data`.
pub fn fit_method<'a>(data: &'a Dataset, spec: &KernelSpec, k: &Mat<f64>, method: &Method, seed: u64, label: &str) -> Result<Fit<'a>> {
    let n = data.len();
    let s2 = data.sigma2();
    let y = data.y_col();
    let start = Instant::now();
    let posterior = match *method {
        Method::Exact => GPPosterior::exact_with_matrix(data, spec, k.as_ref())?,
        Method::Evgp { m } => {
            let eig = normalized_eig(k.as_ref())?;
            crate::posterior::approx_posterior(data, spec, closed_form_c_ev(&eig, m, s2, n)?)?
        }
        Method::Lgp { m, krylov_dim, v0 } => {
            let kdim = krylov_dim.unwrap_or_else(|| default_krylov_dim(m, n)).max(m);
            let start_vec = match v0 {
                V0Choice::Data => y.clone(),
                V0Choice::Random => {
                    let mut r = rng::stream(label, n, seed, "lanczos-v0");
                    Col::from_fn(n, |_| r.sample::<f64, _>(StandardNormal))
                }
            };
            let start_vec = &start_vec / start_vec.norm_l2();
            let lz = lanczos(&Scaled::new(k, 1.0 / n as f64), start_vec.as_ref(), kdim)?;
            crate::posterior::approx_posterior(data, spec, closed_form_c_lanczos(&lz, m, s2, n)?)?
        }
        Method::Cggp { m } => {
            let cg = cg_solve(&Shifted::new(k, s2), y.as_ref(), m, 0.0)?;
            crate::posterior::approx_posterior(data, spec, closed_form_c_cg(&cg, cg.steps)?)?
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Fit { posterior, wall_ms })
}

/// Outcome of one (method, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub method: String,
    pub m: usize,
    pub seed: u64,
    pub mse: Option<f64>,
    pub kl: Option<f64>,
    pub mean_bandwidth: Option<f64>,
    pub wall_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The failure came from the numerics rather than the inputs.
    #[serde(skip)]
    pub numerical_failure: bool,
}

impl CellRecord {
    fn failed(method: &Method, n: usize, seed: u64, e: &Error) -> Self {
        Self {
            method: method.label(n),
            m: method.m(n),
            seed,
            mse: None,
            kl: None,
            mean_bandwidth: None,
            wall_ms: None,
            error: Some(e.to_string()),
            numerical_failure: e.is_numerical(),
        }
    }
}

/// Aggregate over seeds for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: Method,
    pub m: usize,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub kl_mean: Option<f64>,
    pub mean_bandwidth: Option<f64>,
    pub wall_ms_median: f64,
    pub ok_cells: usize,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub n: usize,
    pub kernel: KernelSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
    pub cells: Vec<CellRecord>,
}

impl ExperimentReport {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.label == label)
    }

    pub fn summary_csv(&self, include_timing: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method", "m", "seed", "mse", "kl", "mean_bandwidth"];
        if include_timing {
            header.push("wall_ms");
        }
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let mut row = vec![
                c.method.clone(),
                c.m.to_string(),
                c.seed.to_string(),
                opt(c.mse),
                opt(c.kl),
                opt(c.mean_bandwidth),
            ];
            if include_timing {
                row.push(opt(c.wall_ms));
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

struct CellOutput {
    record: CellRecord,
    predictions: Option<(String, String)>,
}

fn run_cell(cfg: &ExperimentConfig, data: &Dataset, spec: &KernelSpec, k: &Mat<f64>, grid: &Points, method: &Method, seed: u64) -> Result<(CellRecord, Option<String>)> {
    let n = data.len();
    let fit = fit_method(data, spec, k, method, seed, cfg.scenario.label())?;
    let post = &fit.posterior;
    let fitted = post.fitted_mean(k.as_ref());
    let truth = data.truth_values().ok_or_else(|| Error::Config("dataset has no truth".into()))?;
    let err = mse(&fitted, &truth)?;
    let kl = match post.low_rank() {
        _ if n > cfg.kl_max_n => None,
        None => Some(0.0),
        Some(c) => Some(kl_decomposition(k.as_ref(), data.sigma2(), c, data.y_col().as_ref())?.direct),
    };
    let (bandwidth, csv_text) = if cfg.skip_grid {
        (None, None)
    } else {
        let preds = post.predict(grid)?;
        let z = z_quantile(cfg.level)?;
        let mean_bw = preds.iter().map(|p| z * p.var.sqrt()).sum::<f64>() / preds.len() as f64;
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, grid, &preds, cfg.level)?;
        (Some(mean_bw), Some(String::from_utf8(buf).expect("csv output is UTF-8")))
    };
    let record = CellRecord {
        method: method.label(n),
        m: method.m(n),
        seed,
        mse: Some(err),
        kl,
        mean_bandwidth: bandwidth,
        wall_ms: Some(fit.wall_ms),
        error: None,
        numerical_failure: false,
    };
    Ok((record, csv_text))
}

fn run_seed(cfg: &ExperimentConfig, grid: &Points, seed: u64) -> Vec<CellOutput> {
    let n = cfg.n;
    let fail_all = |e: &Error| -> Vec<CellOutput> {
        cfg.methods
            .iter()
            .map(|m| CellOutput {
                record: CellRecord::failed(m, n, seed, e),
                predictions: None,
            })
            .collect()
    };
    let data = match generate_data_with(cfg.scenario, n, seed, cfg.custom.as_ref()) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("seed {seed}: {e}");
            return fail_all(&e);
        }
    };
    let spec = cfg.kernel_spec().resolved(n);
    let k = match kernel_matrix(&spec, &data.x) {
        Ok(k) => k,
        Err(e) => {
            log::warn!("seed {seed}: {e}");
            return fail_all(&e);
        }
    };
    cfg.methods
        .iter()
        .map(|method| match run_cell(cfg, &data, &spec, &k, grid, method, seed) {
            Ok((record, csv)) => CellOutput {
                predictions: csv.map(|text| (format!("{}_seed{}.csv", method.label(n), seed), text)),
                record,
            },
            Err(e) => {
                log::warn!("{} seed {seed}: {e}", method.label(n));
                CellOutput {
                    record: CellRecord::failed(method, n, seed, &e),
                    predictions: None,
                }
            }
        })
        .collect()
}

/// Runs every (seed, method) cell; seeds run in parallel on the current
/// rayon pool. Files are written when `output_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = cfg.grid_spec().build();
    let per_seed: Vec<Vec<CellOutput>> = cfg.seeds.par_iter().map(|&s| run_seed(cfg, &grid, s)).collect();

    let mut cells = Vec::new();
    let mut files = Vec::new();
    for outputs in per_seed {
        for out in outputs {
            cells.push(out.record);
            if let Some(f) = out.predictions {
                files.push(f);
            }
        }
    }
    let methods = cfg
        .methods
        .iter()
        .map(|method| summarize(method, cfg.n, &cells))
        .collect();
    let report = ExperimentReport {
        scenario: cfg.scenario,
        n: cfg.n,
        kernel: cfg.kernel_spec().resolved(cfg.n),
        seeds: cfg.seeds.clone(),
        methods,
        cells,
    };
    if let Some(dir) = &cfg.output_dir {
        write_report(dir, &report, &files)?;
    }
    Ok(report)
}

fn summarize(method: &Method, n: usize, cells: &[CellRecord]) -> MethodSummary {
    let label = method.label(n);
    let mine: Vec<&CellRecord> = cells.iter().filter(|c| c.method == label).collect();
    let ok: Vec<&CellRecord> = mine.iter().copied().filter(|c| c.error.is_none()).collect();
    let mses: Vec<f64> = ok.iter().filter_map(|c| c.mse).collect();
    let (mse_mean, se) = if mses.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_standard_error(&mses) };
    let mse_sd = se * (mses.len() as f64).sqrt();
    let mean_of = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let times: Vec<f64> = ok.iter().filter_map(|c| c.wall_ms).collect();
    MethodSummary {
        label,
        method: *method,
        m: method.m(n),
        mse_mean,
        mse_sd,
        kl_mean: mean_of(ok.iter().filter_map(|c| c.kl).collect()),
        mean_bandwidth: mean_of(ok.iter().filter_map(|c| c.mean_bandwidth).collect()),
        wall_ms_median: crate::diagnostics::median(&times),
        ok_cells: ok.len(),
        failed_cells: mine.len() - ok.len(),
    }
}

fn write_report(dir: &Path, report: &ExperimentReport, files: &[(String, String)]) -> Result<()> {
    let pred_dir = dir.join("predictions");
    fs::create_dir_all(&pred_dir)?;
    for (name, text) in files {
        fs::write(pred_dir.join(name), text)?;
    }
    fs::write(dir.join("summary.csv"), report.summary_csv(true)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Shifted-policy gap for data whose truth lies along the top eigenvector.
///
/// The truth is `f0 = k(X, .)^T a` with `a = n u_1 / mu_1`, so `f0(X) = n u_1`.
pub fn inconsistency_sweep(sizes: &[usize], seed: u64) -> Result<Vec<InconsistencyReport>> {
    let label = Scenario::InconsistencyDemo.label();
    let spec = KernelSpec::matern(MATERN_ALPHA);
    sizes
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::Config("inconsistency sizes must be >= 2".into()));
            }
            let xs = draw_design(Design::Uniform { lo: 0.0, hi: 1.0 }, n, label, seed);
            let k = kernel_matrix(&spec, &Points::from_scalars(&xs))?;
            let eig = normalized_eig(k.as_ref())?;
            let mut r = rng::stream(label, n, seed, "noise");
            let u1 = eig.vector(0);
            let y = Col::from_fn(n, |i| n as f64 * u1[i] + STUDY_SIGMA * r.sample::<f64, _>(StandardNormal));
            inconsistency_gap(&k, STUDY_SIGMA * STUDY_SIGMA, y.as_ref(), &eig)
        })
        .collect()
}

pub fn inconsistency_csv(reports: &[InconsistencyReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "gap", "direct"])?;
    for r in reports {
        w.write_record([r.n.to_string(), r.closed_form.to_string(), r.direct.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truths_at_reference_points() {
        assert!((matern_truth(0.4) + 0.2f64.powf(0.6)).abs() < 1e-15);
        assert!((matern_truth(0.4) + 0.380_73).abs() < 1e-5);
        assert!((sqexp_truth(1.5) - 2.5f64.powf(0.8)).abs() < 1e-15);
        assert!((sqexp_truth(1.5) - 2.081_383).abs() < 1e-6);
    }

    #[test]
    fn data_is_deterministic() {
        let a = generate_data(Scenario::MaternStudy, 50, 3).unwrap();
        let b = generate_data(Scenario::MaternStudy, 50, 3).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        let c = generate_data(Scenario::MaternStudy, 50, 4).unwrap();
        assert_ne!(a.y, c.y);
        let s = generate_data(Scenario::SqexpStudy, 50, 3).unwrap();
        assert!(s.x.coords().iter().any(|x| *x < 0.0));
        assert!(a.x.coords().iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn unknown_data_scenarios_rejected() {
        assert!(generate_data(Scenario::InconsistencyDemo, 10, 0).is_err());
        assert!(generate_data(Scenario::Custom, 10, 0).is_err());
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario":"matern_study","n":20,"methods":[{"method":"exact"},{"method":"cggp","m":5}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.seeds.len(), 10);
        assert_eq!(cfg.methods[1], Method::Cggp { m: 5 });
        let bad = ExperimentConfig::from_json(r#"{"scenario":"matern_study","n":5,"methods":[{"method":"cggp","m":6}]}"#);
        assert!(matches!(bad, Err(Error::Config(_))));
        let typo = ExperimentConfig::from_json(r#"{"scenario":"matern_study","n":5,"methods":[],"sedes":[1]}"#);
        assert!(matches!(typo, Err(Error::Config(_))));
        let unknown = ExperimentConfig::from_json(r#"{"scenario":"nope","n":5,"methods":[{"method":"exact"}]}"#);
        assert!(matches!(unknown, Err(Error::Config(_))));
    }

    #[test]
    fn schema_example_parses() {
        let text = CONFIG_SCHEMA
            .replace("matern_study | sqexp_study | timing_study | custom", "matern_study")
            .replace("data | random", "data");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.methods.len(), 4);
    }

    #[test]
    fn small_experiment_report_is_complete() {
        let mut cfg = ExperimentConfig::new(
            Scenario::MaternStudy,
            40,
            vec![Method::Exact, Method::Evgp { m: 5 }, Method::Lgp { m: 5, krylov_dim: None, v0: V0Choice::Random }, Method::Cggp { m: 5 }],
            vec![1, 2],
        );
        cfg.grid = Some(GridSpec { points: 20, lo: 0.0, hi: 1.0 });
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.cells.len(), 8);
        assert!(report.cells.iter().all(|c| c.error.is_none() && c.kl.is_some()));
        assert_eq!(report.method("exact").unwrap().kl_mean, Some(0.0));
        for s in &report.methods {
            assert_eq!(s.ok_cells, 2);
            assert!(s.mse_mean.is_finite());
        }
        let csv = report.summary_csv(true).unwrap();
        assert!(csv.starts_with("method,m,seed,mse,kl,mean_bandwidth,wall_ms\n"));
    }

    #[test]
    fn failing_cell_does_not_abort() {
        let mut cfg = ExperimentConfig::new(Scenario::MaternStudy, 10, vec![Method::Exact, Method::Cggp { m: 3 }], vec![0]);
        cfg.skip_grid = true;
        cfg.level = 0.95;
        // a negative Matérn order fails at kernel assembly for every cell
        cfg.kernel = Some(KernelSpec::Matern { alpha: 0.6 });
        let ok = run_experiment(&cfg).unwrap();
        assert!(ok.cells.iter().all(|c| c.error.is_none()));
        let grid = GridSpec { points: 5, lo: 0.0, hi: 1.0 }.build();
        let out = run_seed(&ExperimentConfig { custom: None, scenario: Scenario::Custom, ..cfg.clone() }, &grid, 0);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|o| o.record.error.is_some()));
    }

    #[test]
    fn inconsistency_sweep_grows() {
        let reps = inconsistency_sweep(&[20, 40, 80], 1).unwrap();
        assert!(reps.windows(2).all(|w| w[1].closed_form > w[0].closed_form));
        for r in &reps {
            assert!((r.closed_form - r.direct).abs() <= 1e-6 * r.closed_form);
        }
        let csv = inconsistency_csv(&reps).unwrap();
        assert!(csv.starts_with("n,gap,direct\n20,"));
    }
}
