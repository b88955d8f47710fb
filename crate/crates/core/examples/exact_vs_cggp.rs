//! Exact posterior against the iterative approximations on the Matérn study.

use itergp::diagnostics::{kl_decomposition, mse};
use itergp::experiments::{fit_method, generate_data, matern_truth, scenario_kernel, GridSpec, Method, Scenario, V0Choice};
use itergp::kernels::kernel_matrix;

fn main() -> itergp::Result<()> {
    let scenario = Scenario::MaternStudy;
    let n = 800;
    let seed = 1;
    let data = generate_data(scenario, n, seed)?;
    let spec = scenario_kernel(scenario, n);
    let k = kernel_matrix(&spec, &data.x)?;
    let zs = GridSpec::default_for(scenario).build();
    let truth: Vec<f64> = zs.iter().map(|z| matern_truth(z[0])).collect();
    let y = data.y_col();

    let methods = [
        Method::Exact,
        Method::Evgp { m: 10 },
        Method::Lgp { m: 10, krylov_dim: None, v0: V0Choice::Data },
        Method::Cggp { m: 10 },
        Method::Cggp { m: 40 },
    ];
    println!("{:<10} {:>10} {:>10} {:>9}", "method", "mse", "kl", "ms");
    for method in &methods {
        let fit = fit_method(&data, &spec, &k, method, seed, scenario.label())?;
        let means: Vec<f64> = fit.posterior.predict(&zs)?.iter().map(|p| p.mean).collect();
        let kl = match fit.posterior.low_rank() {
            Some(c) => kl_decomposition(k.as_ref(), data.sigma2(), c, y.as_ref())?.direct,
            None => 0.0,
        };
        println!("{:<10} {:>10.3e} {:>10.3e} {:>9.1}", method.label(n), mse(&means, &truth)?, kl, fit.wall_ms);
    }
    Ok(())
}
