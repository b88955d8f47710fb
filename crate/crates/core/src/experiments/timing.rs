//! Wall-clock scaling of the exact and iterative posteriors.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{fit_method, generate_data, scenario_kernel, Method, Scenario, V0Choice, MATERN_ALPHA};
use crate::diagnostics::median;
use crate::error::{Error, Result};
use crate::kernels::kernel_matrix;

/// Timings below this many milliseconds are flagged as under-resolved.
pub const RESOLUTION_MS: f64 = 1.0;

/// Approximate methods use the rate-optimal `m = ceil(2 n^{1/(2 alpha + 1)})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimedMethod {
    Exact,
    Evgp,
    Lgp,
    Cggp,
}

impl TimedMethod {
    pub fn name(self) -> &'static str {
        match self {
            TimedMethod::Exact => "exact",
            TimedMethod::Evgp => "evgp",
            TimedMethod::Lgp => "lgp",
            TimedMethod::Cggp => "cggp",
        }
    }

    pub fn method(self, n: usize, alpha: f64) -> Method {
        let m = optimal_m(n, alpha);
        match self {
            TimedMethod::Exact => Method::Exact,
            TimedMethod::Evgp => Method::Evgp { m },
            TimedMethod::Lgp => Method::Lgp { m, krylov_dim: None, v0: V0Choice::Data },
            TimedMethod::Cggp => Method::Cggp { m },
        }
    }
}

pub fn optimal_m(n: usize, alpha: f64) -> usize {
    ((2.0 * (n as f64).powf(1.0 / (2.0 * alpha + 1.0))).ceil() as usize).clamp(1, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub method: String,
    pub m: usize,
    pub median_ms: f64,
    pub reps: usize,
    pub under_resolved: bool,
}

/// Least-squares line `ln t = intercept + slope ln n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub method: String,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub slopes: Vec<SlopeFit>,
}

impl TimingReport {
    pub fn slope(&self, method: &str) -> Option<f64> {
        self.slopes.iter().find(|s| s.method == method).map(|s| s.slope)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "method", "m", "median_ms", "reps", "under_resolved"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.method.clone(),
                r.m.to_string(),
                r.median_ms.to_string(),
                r.reps.to_string(),
                r.under_resolved.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn slopes_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "slope", "intercept"])?;
        for s in &self.slopes {
            w.write_record([s.method.clone(), s.slope.to_string(), s.intercept.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// OLS fit of `ln y` on `ln x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs >= 2 positive points".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("log-log fit needs distinct sizes".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Median fit times on the Matérn study data; kernel assembly is excluded.
pub fn timing_harness(sizes: &[usize], methods: &[TimedMethod], reps: usize, seed: u64) -> Result<TimingReport> {
    if sizes.is_empty() || methods.is_empty() || reps == 0 {
        return Err(Error::Config("timing needs sizes, methods and reps >= 1".into()));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("timing sizes must be strictly ascending".into()));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let data = generate_data(Scenario::TimingStudy, n, seed)?;
        let spec = scenario_kernel(Scenario::TimingStudy, n);
        let k = kernel_matrix(&spec, &data.x)?;
        for &tm in methods {
            let method = tm.method(n, MATERN_ALPHA);
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let start = Instant::now();
                let fit = fit_method(&data, &spec, &k, &method, seed, Scenario::TimingStudy.label())?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
                drop(fit);
            }
            let median_ms = median(&times);
            if median_ms < RESOLUTION_MS {
                log::warn!("{} at n = {n} took {median_ms:.3} ms, below timer resolution", tm.name());
            }
            log::info!("{} n = {n}: {median_ms:.1} ms", tm.name());
            rows.push(TimingRow {
                n,
                method: tm.name().into(),
                m: method.m(n),
                median_ms,
                reps,
                under_resolved: median_ms < RESOLUTION_MS,
            });
        }
    }
    let mut slopes = Vec::new();
    if sizes.len() >= 2 {
        for &tm in methods {
            let (ns, ts): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.method == tm.name())
                .map(|r| (r.n as f64, r.median_ms))
                .unzip();
            let (slope, intercept) = loglog_fit(&ns, &ts)?;
            slopes.push(SlopeFit { method: tm.name().into(), slope, intercept });
        }
    }
    Ok(TimingReport { rows, slopes })
}
