//! Exact and approximate GP posteriors: pointwise moments and credible bands.

use std::io::Write;

use faer::{Col, Mat, MatRef};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::itergp::LowRankPrecision;
use crate::kernels::{kernel_cross_matrix, kernel_diagonal, kernel_matrix, Dataset, KernelSpec, Points};
use crate::linalg::{Cholesky, LinearOperator};

/// Largest `n` for which a dense factorization is attempted.
pub const DENSE_LIMIT: usize = 20_000;
/// Negative variances down to `-WARN_TOL * k(x, x)` are clamped silently.
const WARN_TOL: f64 = 1e-8;
/// Below `-FAIL_TOL * k(x, x)` the variance is reported as an error.
const FAIL_TOL: f64 = 1e-6;
/// Probes per block in [`GPPosterior::predict`].
const CHUNK: usize = 256;

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

enum Precision {
    Exact(Cholesky),
    LowRank(LowRankPrecision),
}

/// Posterior mean and variance at one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub var: f64,
}

/// GP posterior given data, kernel and either an exact solve or a low-rank
/// precision approximation `C`.
pub struct GPPosterior<'a> {
    data: &'a Dataset,
    spec: KernelSpec,
    sigma2: f64,
    precision: Precision,
    /// Representer weights, `K_sigma^{-1} Y` or `C Y`.
    weights: Col<f64>,
}

fn shifted(k: MatRef<'_, f64>, s2: f64) -> Mat<f64> {
    let mut ks = k.to_owned();
    for i in 0..ks.nrows() {
        ks[(i, i)] += s2;
    }
    ks
}

/// Exact posterior; assembles and factorizes `K + sigma^2 I`.
pub fn exact_posterior<'a>(data: &'a Dataset, spec: &KernelSpec) -> Result<GPPosterior<'a>> {
    if data.len() > DENSE_LIMIT {
        return Err(Error::TooLarge { n: data.len(), limit: DENSE_LIMIT });
    }
    let spec = spec.resolved(data.len());
    let k = kernel_matrix(&spec, &data.x)?;
    GPPosterior::exact_with_matrix(data, &spec, k.as_ref())
}

/// Posterior with `K_sigma^{-1}` replaced by the low-rank `C`.
pub fn approx_posterior<'a>(data: &'a Dataset, spec: &KernelSpec, precision: LowRankPrecision) -> Result<GPPosterior<'a>> {
    if precision.dim() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), found: precision.dim() });
    }
    let spec = spec.resolved(data.len());
    spec.validate()?;
    let weights = precision.apply(data.y_col().as_ref());
    Ok(GPPosterior { data, spec, sigma2: data.sigma2(), precision: Precision::LowRank(precision), weights })
}

impl<'a> GPPosterior<'a> {
    /// Exact posterior from an already assembled kernel matrix `K`.
    pub fn exact_with_matrix(data: &'a Dataset, spec: &KernelSpec, k: MatRef<'_, f64>) -> Result<Self> {
        if k.nrows() != data.len() || k.ncols() != data.len() {
            return Err(Error::DimensionMismatch { expected: data.len(), found: k.nrows() });
        }
        if data.len() > DENSE_LIMIT {
            return Err(Error::TooLarge { n: data.len(), limit: DENSE_LIMIT });
        }
        let sigma2 = data.sigma2();
        let chol = Cholesky::new(shifted(k, sigma2).as_ref())?;
        let weights = chol.solve_col(data.y_col().as_ref());
        Ok(Self { data, spec: spec.resolved(data.len()), sigma2, precision: Precision::Exact(chol), weights })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.precision, Precision::Exact(_))
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// The approximate precision `C`; `None` for the exact posterior.
    pub fn low_rank(&self) -> Option<&LowRankPrecision> {
        match &self.precision {
            Precision::LowRank(c) => Some(c),
            Precision::Exact(_) => None,
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn representer_weights(&self) -> &Col<f64> {
        &self.weights
    }

    /// Posterior mean at the design points, `K w`.
    pub fn fitted_mean(&self, k: MatRef<'_, f64>) -> Vec<f64> {
        (k * &self.weights).iter().copied().collect()
    }

    /// `k(X, z)^T M k(X, z)` for each column, with `M` the (approximate) inverse.
    fn explained(&self, cross: MatRef<'_, f64>) -> Vec<f64> {
        match &self.precision {
            Precision::Exact(chol) => {
                let half = chol.solve_lower(cross);
                (0..half.ncols()).map(|j| half.col(j).squared_norm_l2()).collect()
            }
            Precision::LowRank(c) => {
                let coeffs = c.factors.transpose() * cross;
                (0..coeffs.ncols())
                    .map(|j| (0..c.rank()).map(|r| c.weights[r] * coeffs[(r, j)] * coeffs[(r, j)]).sum())
                    .collect()
            }
        }
    }

    fn predict_chunk(&self, zs: &Points, offset: usize) -> Result<Vec<Prediction>> {
        let cross = kernel_cross_matrix(&self.spec, &self.data.x, zs)?;
        let prior = kernel_diagonal(&self.spec, zs, self.data.len())?;
        let means = cross.transpose() * &self.weights;
        let explained = self.explained(cross.as_ref());
        let mut out = Vec::with_capacity(zs.len());
        for j in 0..zs.len() {
            let var = clamp_variance(prior[j] - explained[j], prior[j], offset + j)?;
            out.push(Prediction { mean: means[j], var });
        }
        Ok(out)
    }

    /// Posterior mean and variance at each probe.
    pub fn predict(&self, zs: &Points) -> Result<Vec<Prediction>> {
        if zs.dim() != self.data.x.dim() {
            return Err(Error::DimensionMismatch { expected: self.data.x.dim(), found: zs.dim() });
        }
        let d = zs.dim();
        let chunks: Vec<(usize, Points)> = zs
            .coords()
            .chunks(CHUNK * d)
            .enumerate()
            .map(|(c, coords)| Points::new(d, coords.to_vec()).map(|p| (c * CHUNK, p)))
            .collect::<Result<_>>()?;
        let parts: Vec<Result<Vec<Prediction>>> =
            chunks.par_iter().map(|(offset, pts)| self.predict_chunk(pts, *offset)).collect();
        let mut out = Vec::with_capacity(zs.len());
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }

    /// Full posterior covariance between design points, `K - K M K`.
    pub fn design_covariance(&self, k: MatRef<'_, f64>) -> Mat<f64> {
        let kmk = match &self.precision {
            Precision::Exact(chol) => {
                let half = chol.solve_lower(k);
                half.transpose() * &half
            }
            Precision::LowRank(c) => k * c.apply_mat(k),
        };
        let mut cov = k.to_owned() - kmk;
        for j in 0..cov.ncols() {
            for i in (j + 1)..cov.nrows() {
                let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    }
}

fn clamp_variance(var: f64, prior: f64, index: usize) -> Result<f64> {
    if var >= 0.0 {
        return Ok(var);
    }
    if !var.is_finite() {
        return Err(Error::NonFinite("predictive variance"));
    }
    if var < -FAIL_TOL * prior {
        return Err(Error::NegativeVariance { index, variance: var, prior });
    }
    if var < -WARN_TOL * prior {
        log::warn!("clamping predictive variance {var:e} at probe {index} to zero");
    }
    Ok(0.0)
}

/// Two-sided standard normal quantile for credible level `level`.
pub fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("credible level must lie in (0, 1), got {level}")));
    }
    if level == 0.95 {
        return Ok(Z95);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + 0.5 * level))
}

/// Pointwise band `mean -/+ z sqrt(var)`.
pub fn credible_band(preds: &[Prediction], level: f64) -> Result<Vec<(f64, f64)>> {
    let z = z_quantile(level)?;
    Ok(preds
        .iter()
        .map(|p| {
            let half = z * p.var.sqrt();
            (p.mean - half, p.mean + half)
        })
        .collect())
}

/// Writes `x, mean, var, lo, hi`; multi-dimensional probes are written with
/// space-separated coordinates in the `x` column.
pub fn write_predictions_csv<W: Write>(out: W, zs: &Points, preds: &[Prediction], level: f64) -> Result<()> {
    if zs.len() != preds.len() {
        return Err(Error::DimensionMismatch { expected: zs.len(), found: preds.len() });
    }
    let bands = credible_band(preds, level)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "mean", "var", "lo", "hi"])?;
    for ((z, p), (lo, hi)) in zs.iter().zip(preds).zip(bands) {
        let x = z.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        w.write_record([x, p.mean.to_string(), p.var.to_string(), lo.to_string(), hi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `K + sigma^2 I` applied through `K` without forming it.
pub fn k_sigma(k: &Mat<f64>, sigma2: f64) -> impl LinearOperator + '_ {
    crate::linalg::Shifted::new(k, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::itergp::{closed_form_c_cg, closed_form_c_ev, run_itergp, Policy};
    use crate::spectral::{cg_solve, normalized_eig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, sigma: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin() + 0.1 * (rng.random::<f64>() - 0.5)).collect();
        Dataset::new(Points::from_scalars(&xs), ys, sigma).unwrap()
    }

    fn grid(g: usize) -> Points {
        Points::from_scalars(&(0..g).map(|i| i as f64 / (g - 1) as f64).collect::<Vec<_>>())
    }

    #[test]
    fn scalar_posterior() {
        let data = Dataset::new(Points::from_scalars(&[0.0]), vec![2.0], 1.0).unwrap();
        let post = exact_posterior(&data, &KernelSpec::sqexp(1.0)).unwrap();
        let p = post.predict(&Points::from_scalars(&[0.0])).unwrap()[0];
        assert!((p.mean - 1.0).abs() < 1e-15);
        assert!((p.var - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noiseless_limit_interpolates() {
        let data = Dataset::new(Points::from_scalars(&[0.1, 0.5, 0.9]), vec![1.0, -2.0, 0.5], 1e-4).unwrap();
        let post = exact_posterior(&data, &KernelSpec::matern(1.5)).unwrap();
        let preds = post.predict(&data.x).unwrap();
        for (p, y) in preds.iter().zip(&data.y) {
            assert!((p.mean - y).abs() < 1e-4);
        }
    }

    #[test]
    fn matches_joint_gaussian_conditioning() {
        let data = dataset(8, 0.3, 1);
        let spec = KernelSpec::matern(0.8);
        let post = exact_posterior(&data, &spec).unwrap();
        let z = [0.37];
        let pred = post.predict(&Points::from_scalars(&z)).unwrap()[0];
        // joint covariance of (f(z), Y), then condition
        let all = Points::from_scalars(&z).concat(&data.x).unwrap();
        let mut joint = kernel_matrix(&spec, &all).unwrap();
        for i in 1..9 {
            joint[(i, i)] += 0.09;
        }
        let syy = joint.submatrix(1, 1, 8, 8).to_owned();
        let sfy = joint.submatrix(1, 0, 8, 1).to_owned();
        let inv = Cholesky::new(syy.as_ref()).unwrap().inverse();
        let y = data.y_col();
        let mean = (sfy.transpose() * &inv * &y)[0];
        let var = joint[(0, 0)] - (sfy.transpose() * &inv * &sfy)[(0, 0)];
        assert!((pred.mean - mean).abs() < 1e-10);
        assert!((pred.var - var).abs() < 1e-10);
    }

    #[test]
    fn full_rank_approximation_matches_exact() {
        let data = dataset(20, 0.2, 2);
        let spec = KernelSpec::matern(0.6);
        let k = kernel_matrix(&spec, &data.x).unwrap();
        let eig = normalized_eig(k.as_ref()).unwrap();
        let c = closed_form_c_ev(&eig, 20, data.sigma2(), 20).unwrap();
        let exact = exact_posterior(&data, &spec).unwrap().predict(&grid(100)).unwrap();
        let approx = approx_posterior(&data, &spec, c).unwrap().predict(&grid(100)).unwrap();
        for (a, e) in approx.iter().zip(&exact) {
            assert!((a.mean - e.mean).abs() < 1e-6);
            assert!((a.var - e.var).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_rank_is_prior() {
        let data = dataset(6, 0.2, 3);
        let spec = KernelSpec::sqexp(0.4);
        let post = approx_posterior(&data, &spec, LowRankPrecision::zero(6)).unwrap();
        for p in post.predict(&grid(11)).unwrap() {
            assert_eq!(p.mean, 0.0);
            assert_eq!(p.var, 1.0);
        }
    }

    #[test]
    fn variance_non_increasing_in_m_and_above_exact() {
        let n = 10;
        let data = dataset(n, 0.2, 4);
        let spec = KernelSpec::matern(0.6);
        let k = kernel_matrix(&spec, &data.x).unwrap();
        let cg = cg_solve(&k_sigma(&k, data.sigma2()), data.y_col().as_ref(), n, 0.0).unwrap();
        let g = grid(25);
        let exact = exact_posterior(&data, &spec).unwrap().predict(&g).unwrap();
        let mut prev: Option<Vec<Prediction>> = None;
        for m in 0..=cg.steps {
            let c = closed_form_c_cg(&cg, m).unwrap();
            let preds = approx_posterior(&data, &spec, c).unwrap().predict(&g).unwrap();
            for (j, p) in preds.iter().enumerate() {
                assert!(p.var >= exact[j].var - 1e-8);
                if let Some(prev) = &prev {
                    assert!(p.var <= prev[j].var + 1e-12);
                }
            }
            prev = Some(preds);
        }
    }

    #[test]
    fn far_field_sqexp_returns_prior() {
        let data = dataset(10, 0.2, 5);
        let post = exact_posterior(&data, &KernelSpec::sqexp(0.1)).unwrap();
        let p = post.predict(&Points::from_scalars(&[50.0])).unwrap()[0];
        assert!(p.mean.abs() < 1e-8 && (p.var - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mean_agrees_with_representer_weights_and_dense_formula() {
        let n = 12;
        let data = dataset(n, 0.25, 6);
        let spec = KernelSpec::matern(1.2);
        let k = kernel_matrix(&spec, &data.x).unwrap();
        let eig = normalized_eig(k.as_ref()).unwrap();
        let st = run_itergp(&k_sigma(&k, data.sigma2()), data.y_col().as_ref(), &Policy::ev(&eig, 5).unwrap(), 5).unwrap();
        let c = st.precision();
        let dense = c.to_dense();
        let post = approx_posterior(&data, &spec, c).unwrap();
        let g = grid(9);
        let cross = kernel_cross_matrix(&spec, &data.x, &g).unwrap();
        let preds = post.predict(&g).unwrap();
        for (j, p) in preds.iter().enumerate() {
            let kz = cross.col(j);
            let mean = kz.transpose() * st.weights();
            let var = 1.0 - kz.transpose() * (&dense * kz);
            assert!((p.mean - mean).abs() < 1e-10);
            assert!((p.var - var).abs() < 1e-10);
        }
    }

    #[test]
    fn prediction_independent_of_chunking() {
        let data = dataset(30, 0.2, 7);
        let post = exact_posterior(&data, &KernelSpec::matern(0.6)).unwrap();
        let big = grid(CHUNK * 2 + 17);
        let all = post.predict(&big).unwrap();
        let one = post.predict(&Points::from_scalars(&[big.point(CHUNK + 3)[0]])).unwrap()[0];
        assert_eq!(all[CHUNK + 3], one);
    }

    #[test]
    fn bands() {
        let preds = [Prediction { mean: 1.0, var: 0.0 }, Prediction { mean: 0.0, var: 1.0 }];
        let b = credible_band(&preds, 0.95).unwrap();
        assert_eq!(b[0], (1.0, 1.0));
        assert!((b[1].1 - 1.959964).abs() < 1e-6);
        assert!(credible_band(&preds, 1.0).is_err());
        assert!(credible_band(&preds, 0.0).is_err());
        assert!((z_quantile(0.5).unwrap() - 0.674_489_750_196_081_7).abs() < 1e-9);
    }

    #[test]
    fn variance_clamping_rules() {
        assert_eq!(clamp_variance(-1e-12, 1.0, 0).unwrap(), 0.0);
        assert_eq!(clamp_variance(-1e-7, 1.0, 0).unwrap(), 0.0);
        assert!(matches!(clamp_variance(-1e-3, 1.0, 4), Err(Error::NegativeVariance { index: 4, .. })));
    }

    #[test]
    fn csv_layout() {
        let data = dataset(5, 0.2, 8);
        let post = exact_posterior(&data, &KernelSpec::matern(0.6)).unwrap();
        let g = grid(3);
        let preds = post.predict(&g).unwrap();
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &g, &preds, 0.95).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,mean,var,lo,hi");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0.5,"));
    }
}
