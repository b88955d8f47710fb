//! KL from an approximate posterior to the exact one, split into its trace,
//! quadratic and log-determinant terms, as the number of iterations grows.

use itergp::experiments::{generate_data, Scenario};
use itergp::diagnostics::kl_decomposition;
use itergp::itergp::{closed_form_c_cg, closed_form_c_ev};
use itergp::kernels::{kernel_matrix, KernelSpec};
use itergp::linalg::Shifted;
use itergp::spectral::{cg_solve, normalized_eig};

fn main() -> itergp::Result<()> {
    let n = 300;
    let data = generate_data(Scenario::MaternStudy, n, 0)?;
    let k = kernel_matrix(&KernelSpec::matern(0.6), &data.x)?;
    let s2 = data.sigma2();
    let y = data.y_col();
    let eig = normalized_eig(k.as_ref())?;
    let cg = cg_solve(&Shifted::new(&k, s2), y.as_ref(), 40, 0.0)?;

    println!("{:<6} {:>4} {:>11} {:>11} {:>11} {:>11}", "policy", "m", "trace", "quadratic", "logdet", "KL");
    for m in [1, 5, 10, 20, 40] {
        for (name, c) in [("ev", closed_form_c_ev(&eig, m, s2, n)?), ("cg", closed_form_c_cg(&cg, m)?)] {
            let r = kl_decomposition(k.as_ref(), s2, &c, y.as_ref())?;
            println!(
                "{name:<6} {m:>4} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
                r.term_trace, r.term_quadratic, r.term_logdet, r.direct
            );
        }
    }
    Ok(())
}
