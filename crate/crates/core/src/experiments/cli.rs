//! Command-line front end shared by the `itergp` binary and the tests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::timing::{timing_harness, TimedMethod};
use super::{
    fit_method, generate_data, inconsistency_csv, inconsistency_sweep, run_experiment, scenario_kernel,
    ExperimentConfig, GridSpec, Method, Scenario, V0Choice, CONFIG_SCHEMA,
};
use crate::diagnostics::{kl_decomposition, partial_trace_check, relative_perturbation_sweep};
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelSpec, SeriesDecay};
use crate::posterior::write_predictions_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exact,
    Evgp,
    Lgp,
    Cggp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    MaternStudy,
    SqexpStudy,
    TimingStudy,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::MaternStudy => Scenario::MaternStudy,
            ScenarioArg::SqexpStudy => Scenario::SqexpStudy,
            ScenarioArg::TimingStudy => Scenario::TimingStudy,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "itergp", version, about = "Exact and iterative Gaussian-process posteriors")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to ITERGP_THREADS)
    #[arg(long, global = true, env = "ITERGP_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one dataset with one method and emit grid predictions
    Fit {
        #[arg(long, value_enum, default_value = "matern-study")]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, value_enum, default_value = "cggp")]
        method: MethodArg,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 400)]
        grid: usize,
    },
    /// Run a config file
    Experiment {
        /// Replace n by the desk-scale size of the scenario
        #[arg(long)]
        quick: bool,
    },
    /// Log-log timing of the exact posterior against the iterative ones
    Timing {
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 1414, 2000, 2828, 4000, 5657, 8000])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = [MethodArg::Exact, MethodArg::Cggp])]
        methods: Vec<MethodArg>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Spectral and KL diagnostics
    Diag {
        #[command(subcommand)]
        report: DiagReport,
    },
    /// Gap of the shifted eigenvector policy over an n-sweep
    DemoInconsistency {
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 200, 400, 800, 1600])]
        sizes: Vec<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum DiagReport {
    /// KL terms of an approximate posterior on Matérn study data
    Kl {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, value_enum, default_value = "cggp")]
        method: MethodArg,
        #[arg(long, default_value_t = 20)]
        m: usize,
    },
    /// Relative eigenvalue error of a polynomial series kernel over an n-sweep
    Perturbation {
        #[arg(long, value_delimiter = ',', default_values_t = [500usize, 1000, 2000, 4000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Empirical against population tail trace
    Trace {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        seeds: u64,
    },
}

fn method_of(arg: MethodArg, m: usize) -> Method {
    match arg {
        MethodArg::Exact => Method::Exact,
        MethodArg::Evgp => Method::Evgp { m },
        MethodArg::Lgp => Method::Lgp { m, krylov_dim: None, v0: V0Choice::Data },
        MethodArg::Cggp => Method::Cggp { m },
    }
}

fn timed_of(arg: MethodArg) -> TimedMethod {
    match arg {
        MethodArg::Exact => TimedMethod::Exact,
        MethodArg::Evgp => TimedMethod::Evgp,
        MethodArg::Lgp => TimedMethod::Lgp,
        MethodArg::Cggp => TimedMethod::Cggp,
    }
}

/// Series kernel of the spectral diagnostics: polynomial decay, tau = 1, alpha = 1, d = 1.
fn diag_series(truncation: Option<usize>) -> KernelSpec {
    KernelSpec::Series { decay: SeriesDecay::Polynomial { alpha: 1.0, tau: 1.0 }, dim: 1, truncation }
}

/// Truncation of the perturbation sweep; keeps large `n` on the `J x J` route.
const PERTURBATION_TRUNCATION: usize = 512;

/// Writes `text` to `dir/name`, or to `stdout` when no directory is given.
fn emit(out: Option<&Path>, name: &str, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text)?;
        }
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn records_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// How a command finished when it did not fail outright.
enum Status {
    Done,
    /// Files were written but this many cells failed numerically.
    NumericalCells(usize),
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<Status> {
    let c = &cli.common;
    let out = c.out.as_deref();
    let seed = c.seed.unwrap_or(0);
    match cli.command {
        Command::Fit { scenario, n, method, m, grid } => {
            let scenario = Scenario::from(scenario);
            let method = method_of(method, m);
            if n == 0 || method.m(n) > n {
                return Err(Error::Config(format!("need 1 <= m <= n, got m = {}, n = {n}", method.m(n))));
            }
            let data = generate_data(scenario, n, seed)?;
            let spec = scenario_kernel(scenario, n);
            let k = kernel_matrix(&spec, &data.x)?;
            let fit = fit_method(&data, &spec, &k, &method, seed, scenario.label())?;
            let zs = GridSpec { points: grid, ..GridSpec::default_for(scenario) }.build();
            let preds = fit.posterior.predict(&zs)?;
            let text = match c.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_predictions_csv(&mut buf, &zs, &preds, 0.95)?;
                    String::from_utf8(buf).expect("csv output is UTF-8")
                }
                Format::Json => {
                    let rows: Vec<_> = zs
                        .coords()
                        .iter()
                        .zip(&preds)
                        .map(|(x, p)| serde_json::json!({"x": x, "mean": p.mean, "var": p.var}))
                        .collect();
                    json(&rows)?
                }
            };
            let name = format!("{}_seed{seed}.{}", method.label(n), ext(c.format));
            emit(out, &name, &text, stdout).map(|()| Status::Done)
        }
        Command::Experiment { quick } => {
            let path = c.config.as_deref().ok_or_else(|| Error::Config("--config is required".into()))?;
            let mut cfg = ExperimentConfig::load(path)?;
            if quick {
                cfg.n = cfg.scenario.quick_n();
                cfg.validate()?;
            }
            if let Some(s) = c.seed {
                cfg.seeds = vec![s];
            }
            if let Some(dir) = out {
                cfg.output_dir = Some(dir.to_path_buf());
            }
            let report = run_experiment(&cfg)?;
            if cfg.output_dir.is_none() {
                let text = match c.format {
                    Format::Csv => report.summary_csv(true)?,
                    Format::Json => json(&report)?,
                };
                stdout.write_all(text.as_bytes())?;
            }
            let numerical = report.cells.iter().filter(|c| c.numerical_failure).count();
            Ok(if numerical > 0 { Status::NumericalCells(numerical) } else { Status::Done })
        }
        Command::Timing { sizes, methods, reps } => {
            let methods: Vec<TimedMethod> = methods.into_iter().map(timed_of).collect();
            let report = timing_harness(&sizes, &methods, reps, seed)?;
            match c.format {
                Format::Csv => {
                    emit(out, "timing.csv", &report.to_csv()?, stdout)?;
                    emit(out, "timing_slopes.csv", &report.slopes_csv()?, stdout).map(|()| Status::Done)
                }
                Format::Json => emit(out, "timing.json", &json(&report)?, stdout).map(|()| Status::Done),
            }
        }
        Command::Diag { report } => match report {
            DiagReport::Kl { n, method, m } => {
                let method = method_of(method, m);
                if method == Method::Exact || m == 0 || m > n {
                    return Err(Error::Config("diag kl needs an approximate method with 1 <= m <= n".into()));
                }
                let data = generate_data(Scenario::MaternStudy, n, seed)?;
                let spec = scenario_kernel(Scenario::MaternStudy, n);
                let k = kernel_matrix(&spec, &data.x)?;
                let fit = fit_method(&data, &spec, &k, &method, seed, Scenario::MaternStudy.label())?;
                let c_m = fit.posterior.low_rank().expect("approximate fit");
                let rep = kl_decomposition(k.as_ref(), data.sigma2(), c_m, data.y_col().as_ref())?;
                let text = match c.format {
                    Format::Csv => records_csv(&[rep])?,
                    Format::Json => json(&rep)?,
                };
                emit(out, &format!("kl.{}", ext(c.format)), &text, stdout).map(|()| Status::Done)
            }
            DiagReport::Perturbation { sizes, m, seeds } => {
                let seeds: Vec<u64> = (0..seeds).collect();
                let points = relative_perturbation_sweep(&diag_series(Some(PERTURBATION_TRUNCATION)), &sizes, m, &seeds)?;
                let text = match c.format {
                    Format::Csv => {
                        let rows: Vec<_> = points.iter().map(|p| (p.n, p.median_error)).collect();
                        let mut w = csv::Writer::from_writer(Vec::new());
                        w.write_record(["n", "median_error"])?;
                        for (n, e) in rows {
                            w.write_record([n.to_string(), e.to_string()])?;
                        }
                        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8")
                    }
                    Format::Json => json(&points)?,
                };
                emit(out, &format!("perturbation.{}", ext(c.format)), &text, stdout).map(|()| Status::Done)
            }
            DiagReport::Trace { n, m, seeds } => {
                let seeds: Vec<u64> = (0..seeds).collect();
                let rep = partial_trace_check(&diag_series(None), n, m, &seeds)?;
                let text = match c.format {
                    Format::Csv => records_csv(&[rep])?,
                    Format::Json => json(&rep)?,
                };
                emit(out, &format!("trace.{}", ext(c.format)), &text, stdout).map(|()| Status::Done)
            }
        },
        Command::DemoInconsistency { sizes } => {
            let reports = inconsistency_sweep(&sizes, seed)?;
            let text = match c.format {
                Format::Csv => inconsistency_csv(&reports)?,
                Format::Json => json(&reports)?,
            };
            emit(out, &format!("inconsistency.{}", ext(c.format)), &text, stdout).map(|()| Status::Done)
        }
    }
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

/// Runs the CLI on `argv` (program name first); returns the exit code.
///
/// 0 on success, 1 on usage or configuration errors, 2 on numerical failure.
pub fn cli_run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let _ = write!(stderr, "{e}\nexperiment config schema:\n{CONFIG_SCHEMA}\n");
            return 1;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start thread pool: {e}");
            return 1;
        }
    };
    let is_experiment = matches!(cli.command, Command::Experiment { .. });
    let mut buf = Vec::new();
    let result = pool.install(|| run(cli, &mut buf));
    let _ = stdout.write_all(&buf);
    match result {
        Ok(Status::Done) => 0,
        Ok(Status::NumericalCells(k)) => {
            let _ = writeln!(stderr, "numerical failure in {k} cell(s); see the error records in the report");
            2
        }
        Err(e) if e.is_numerical() => {
            let _ = writeln!(stderr, "numerical failure: {e}");
            2
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if is_experiment && matches!(e, Error::Config(_)) {
                let _ = writeln!(stderr, "experiment config schema:\n{CONFIG_SCHEMA}");
            }
            1
        }
    }
}

/// [`cli_run`] on the process streams.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    cli_run(argv, &mut out, &mut err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = cli_run(std::iter::once("itergp").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_config_prints_schema() {
        let (code, _, err) = run_args(&["experiment"]);
        assert_eq!(code, 1);
        assert!(err.contains("\"scenario\""));
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, _, err) = run_args(&["frobnicate"]);
        assert_eq!(code, 1);
        assert!(err.contains("schema"));
    }

    #[test]
    fn fit_emits_prediction_csv() {
        let (code, out, _) = run_args(&["fit", "--n", "30", "--m", "4", "--grid", "7", "--threads", "1"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "x,mean,var,lo,hi");
        assert_eq!(lines.len(), 8);
    }

    #[test]
    fn bad_m_is_config_error() {
        let (code, _, _) = run_args(&["fit", "--n", "5", "--m", "9"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("demo-inconsistency"));
    }
}
