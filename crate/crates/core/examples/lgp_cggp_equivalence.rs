//! Lanczos-policy and CG-policy posteriors agree when the Krylov dimension
//! equals the number of iterations.

use itergp::experiments::{fit_method, generate_data, scenario_kernel, GridSpec, Method, Scenario, V0Choice};
use itergp::kernels::kernel_matrix;

fn main() -> itergp::Result<()> {
    let scenario = Scenario::MaternStudy;
    let n = 200;
    let data = generate_data(scenario, n, 0)?;
    let spec = scenario_kernel(scenario, n);
    let k = kernel_matrix(&spec, &data.x)?;
    let zs = GridSpec::default_for(scenario).build();

    for m in [2, 5, 10, 20] {
        let lgp = fit_method(&data, &spec, &k, &Method::Lgp { m, krylov_dim: Some(m), v0: V0Choice::Data }, 0, scenario.label())?;
        let cggp = fit_method(&data, &spec, &k, &Method::Cggp { m }, 0, scenario.label())?;
        let a = lgp.posterior.predict(&zs)?;
        let b = cggp.posterior.predict(&zs)?;
        let gap = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p.mean - q.mean).abs().max((p.var - q.var).abs()))
            .fold(0.0, f64::max);
        println!("m = {m:>2}: max |LGP - CGGP| over {} grid points = {gap:.2e}", zs.len());
    }
    Ok(())
}
