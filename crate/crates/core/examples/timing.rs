//! Wall-clock scaling of the exact solve against CG with the rate-optimal
//! number of iterations. Pass sizes as arguments, e.g. `500 1000 2000`.

use itergp::experiments::timing::{timing_harness, TimedMethod};

fn main() -> itergp::Result<()> {
    let mut sizes: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if sizes.is_empty() {
        sizes = vec![250, 500, 1000, 2000];
    }
    let report = timing_harness(&sizes, &[TimedMethod::Exact, TimedMethod::Cggp], 3, 0)?;
    print!("{}", report.to_csv()?);
    print!("{}", report.slopes_csv()?);
    Ok(())
}
