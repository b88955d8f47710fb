//! Run a small experiment described by JSON and print its summary.

use itergp::experiments::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"{
  "scenario": "sqexp_study",
  "n": 400,
  "methods": [
    {"method": "exact"},
    {"method": "evgp", "m": 8},
    {"method": "lgp", "m": 8},
    {"method": "cggp", "m": 8}
  ],
  "seeds": [0, 1, 2]
}"#;

fn main() -> itergp::Result<()> {
    let mut cfg = ExperimentConfig::from_json(CONFIG)?;
    let dir = std::env::temp_dir().join("itergp-example");
    cfg.output_dir = Some(dir.clone());
    let report = run_experiment(&cfg)?;
    for s in &report.methods {
        println!("{:<10} mse {:.3e} +- {:.1e}  kl {:?}", s.label, s.mse_mean, s.mse_sd, s.kl_mean);
    }
    println!("files written to {}", dir.display());
    Ok(())
}
