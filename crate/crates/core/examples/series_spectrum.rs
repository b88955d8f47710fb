//! Empirical eigenvalues of K/n for a Mercer series kernel: relative
//! perturbation shrinking with n, and the partial-trace tail against the
//! population one.

use itergp::diagnostics::{partial_trace_check, relative_perturbation_sweep};
use itergp::kernels::{KernelSpec, SeriesDecay};

fn main() -> itergp::Result<()> {
    let spec = KernelSpec::series(SeriesDecay::Polynomial { alpha: 1.0, tau: 1.0 }, 1, 512);
    let seeds: Vec<u64> = (0..10).collect();

    for p in relative_perturbation_sweep(&spec, &[250, 500, 1000, 2000], 10, &seeds)? {
        println!("n = {:>4}: median relative error of the top 10 eigenvalues {:.3e}", p.n, p.median_error);
    }

    let rep = partial_trace_check(&spec, 400, 20, &seeds)?;
    println!(
        "tail beyond 20: empirical {:.4e} +- {:.1e} over {} seeds, population {:.4e}",
        rep.mean_empirical_tail, rep.standard_error, rep.seeds, rep.population_tail
    );
    Ok(())
}
