//! Ritz values against the exact spectrum, with the a-priori Lanczos bounds.

use faer::{Col, Mat};
use itergp::diagnostics::unit;
use itergp::spectral::{
    dense_eig, lanczos, lanczos_eigenvalue_bound, lanczos_eigenvector_bound, nearest_ritz, sin_squared, Bound,
};

fn show(b: Bound) -> String {
    b.value().map_or_else(|| "n/a".to_owned(), |v| format!("{v:.2e}"))
}

fn main() -> itergp::Result<()> {
    // diagonal spectrum 0.85^j in a fixed rotated basis
    let n = 80;
    let q = dense_eig(Mat::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 17) as f64 + ((j * 7 + i * 13) % 17) as f64).as_ref())?.vectors;
    let d = Mat::from_fn(n, n, |i, j| if i == j { 0.85f64.powi(i as i32) } else { 0.0 });
    let a = &q * &d * q.transpose();
    let eig = dense_eig(a.as_ref())?;
    let v0 = unit(Col::from_fn(n, |i| 1.0 + (i as f64).sin()).as_ref());

    for kdim in [4, 8, 12] {
        let lz = lanczos(&a, v0.as_ref(), kdim)?;
        println!("Krylov dimension {kdim}");
        for i in 1..=3 {
            let gap = eig.values[i - 1] - lz.values[i - 1];
            let star = nearest_ritz(i, &eig, &lz);
            let angle = sin_squared(eig.vector(i - 1), lz.vector(star));
            println!(
                "  i = {i}: lambda - theta = {gap:.2e} <= {}   sin^2 = {angle:.2e} <= {}",
                show(lanczos_eigenvalue_bound(i, 1, &eig, &lz)),
                show(lanczos_eigenvector_bound(i, 1, &eig, &lz)),
            );
        }
    }
    Ok(())
}
