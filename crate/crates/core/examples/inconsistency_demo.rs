//! A policy that skips the top eigenvector leaves an RKHS gap that grows with n.

use itergp::experiments::{inconsistency_csv, inconsistency_sweep};

fn main() -> itergp::Result<()> {
    let reports = inconsistency_sweep(&[50, 100, 200, 400, 800], 0)?;
    print!("{}", inconsistency_csv(&reports)?);
    Ok(())
}
