//! The eigenvector-policy posterior coincides with Titsias' variational
//! posterior built from the same eigenvector features.

use faer::Col;
use itergp::itergp::{closed_form_c_ev, vb_titsias};
use itergp::kernels::{kernel_matrix, KernelSpec, Points};
use itergp::linalg::frobenius;
use itergp::spectral::normalized_eig;

fn main() -> itergp::Result<()> {
    let n = 120;
    let s2 = 0.04;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let k = kernel_matrix(&KernelSpec::matern(1.5), &Points::from_scalars(&xs))?;
    let y = Col::from_fn(n, |i| (7.0 * xs[i]).sin() + 0.1 * (13.0 * xs[i]).cos());
    let eig = normalized_eig(k.as_ref())?;

    for m in [1, 4, 16, 64] {
        let vb = vb_titsias(k.as_ref(), y.as_ref(), s2, &eig, m)?;
        let c = closed_form_c_ev(&eig, m, s2, n)?;
        let mean = &k * c.apply(y.as_ref());
        let cov = &k - &k * c.apply_mat(k.as_ref());
        let dm = (&vb.mean - &mean).norm_l2() / mean.norm_l2();
        let dc = frobenius((&vb.cov - &cov).as_ref()) / frobenius(cov.as_ref());
        println!("m = {m:>2}: relative mean gap {dm:.2e}, relative covariance gap {dc:.2e}");
    }
    Ok(())
}
