//! Numerical checks of the approximation theory: Gaussian KL and its three-term
//! decomposition, projector distances, eigenvalue perturbation, relative rank,
//! partial traces and the shifted-policy inconsistency.

use faer::{Col, ColRef, Mat, MatRef};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::itergp::{run_itergp, LowRankPrecision, Policy};
use crate::kernels::{kernel_matrix, population_eigenvalues, series_features, KernelSpec, Points};
use crate::linalg::{dot, Cholesky, Shifted};
use crate::rng;
use crate::spectral::{dense_eig, EigenSystem};

/// Largest `n` for dense KL evaluation.
pub const KL_LIMIT: usize = 3000;
/// Relative eigenvalue cutoff of the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

fn symmetrized(mut m: Mat<f64>) -> Mat<f64> {
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `KL(N(mu1, cov1) || N(mu2, cov2))`.
///
/// `cov2` is inverted on the span of its eigenvalues above
/// `PINV_CUTOFF * trace`; the directions dropped are logged.
pub fn kl_gaussians(mu1: ColRef<'_, f64>, cov1: MatRef<'_, f64>, mu2: ColRef<'_, f64>, cov2: MatRef<'_, f64>) -> Result<f64> {
    let n = mu1.nrows();
    for dim in [mu2.nrows(), cov1.nrows(), cov1.ncols(), cov2.nrows(), cov2.ncols()] {
        if dim != n {
            return Err(Error::DimensionMismatch { expected: n, found: dim });
        }
    }
    if n == 0 {
        return Ok(0.0);
    }
    let eig2 = dense_eig(symmetrized(cov2.to_owned()).as_ref())?;
    let trace: f64 = eig2.values.iter().map(|v| v.max(0.0)).sum();
    let keep: Vec<usize> = (0..n).filter(|&j| eig2.values[j] > PINV_CUTOFF * trace).collect();
    if keep.len() < n {
        log::info!("KL: pseudo-inverse drops {} of {n} directions", n - keep.len());
    }
    let r = keep.len();
    // whiten by cov2 on its retained range
    let white = Mat::from_fn(n, r, |i, c| eig2.vectors[(i, keep[c])] / eig2.values[keep[c]].sqrt());
    let w = symmetrized(white.transpose() * cov1 * &white);
    let diff = mu2 - mu1;
    let proj = white.transpose() * &diff;
    let eig_w = dense_eig(w.as_ref())?;
    let mut trace_w = 0.0;
    let mut logdet_w = 0.0;
    for &v in &eig_w.values {
        if v <= 0.0 {
            return Ok(f64::INFINITY);
        }
        trace_w += v;
        logdet_w += v.ln();
    }
    let quad = proj.squared_norm_l2();
    Ok(0.5 * (trace_w - r as f64 - logdet_w + quad))
}

/// Three-term decomposition of `2 KL(approximate || exact)` at the design points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KLReport {
    pub term_trace: f64,
    pub term_quadratic: f64,
    pub term_logdet: f64,
    /// `(I + II + III) / 2`.
    pub total: f64,
    /// Independent evaluation through [`kl_gaussians`].
    pub direct: f64,
}

impl KLReport {
    pub fn sum_of_terms(&self) -> f64 {
        self.term_trace + self.term_quadratic + self.term_logdet
    }
}

/// KL between `N(K C Y, K - K C K)` and `N(K K_s^{-1} Y, K - K K_s^{-1} K)`.
///
/// The terms are computed in the eigenbasis of `K`, the direct value from
/// explicitly formed moments.
pub fn kl_decomposition(k: MatRef<'_, f64>, sigma2: f64, c: &LowRankPrecision, y: ColRef<'_, f64>) -> Result<KLReport> {
    let n = k.nrows();
    if n > KL_LIMIT {
        return Err(Error::TooLarge { n, limit: KL_LIMIT });
    }
    if c.dim() != n || y.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c.dim() });
    }
    let eig = dense_eig(k)?;
    let u = &eig.vectors;
    let mu: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let sigma = sigma2.sqrt();

    // Gamma = K_s^{-1} - C
    let inv_scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] / (mu[j] + sigma2));
    let k_sigma_inv = inv_scaled * u.transpose();
    let gamma = symmetrized(k_sigma_inv - c.to_dense());
    // B = Sigma_post^{-1/2} K, symmetric with eigenvalues sqrt(mu (mu + s2)) / s
    let b_scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * (mu[j] * (mu[j] + sigma2)).sqrt() / sigma);
    let b = symmetrized(b_scaled * u.transpose());
    let m = symmetrized(&b * &gamma * &b);
    let term_trace: f64 = (0..n).map(|i| m[(i, i)]).sum();
    let by = &b * (&gamma * y);
    let term_quadratic = by.squared_norm_l2();
    let m_eig = dense_eig(m.as_ref())?;
    let term_logdet = -m_eig.values.iter().map(|v| v.ln_1p()).sum::<f64>();

    // direct moments
    let chol = Cholesky::new(
        Mat::from_fn(n, n, |i, j| k[(i, j)] + if i == j { sigma2 } else { 0.0 }).as_ref(),
    )?;
    let post_mean = k * chol.solve_col(y);
    let post_cov = symmetrized(chol.solve_mat(k) * faer::Scale(sigma2));
    let approx_mean = k * c.apply(y);
    let approx_cov = symmetrized(k.to_owned() - k * c.apply_mat(k));
    let direct = kl_gaussians(approx_mean.as_ref(), approx_cov.as_ref(), post_mean.as_ref(), post_cov.as_ref())?;

    let total = 0.5 * (term_trace + term_quadratic + term_logdet);
    Ok(KLReport { term_trace, term_quadratic, term_logdet, total, direct })
}

/// `(1/n) sum (a_i - b_i)^2`.
pub fn mse(mean_values: &[f64], f0_values: &[f64]) -> Result<f64> {
    if mean_values.len() != f0_values.len() {
        return Err(Error::DimensionMismatch { expected: f0_values.len(), found: mean_values.len() });
    }
    if mean_values.is_empty() {
        return Err(Error::InvalidParameter("MSE of an empty sample".into()));
    }
    let s: f64 = mean_values.iter().zip(f0_values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / mean_values.len() as f64)
}

/// `|u u^T - v v^T|_HS` for unit vectors.
pub fn projector_hs_distance(u: ColRef<'_, f64>, v: ColRef<'_, f64>) -> Result<f64> {
    if u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch { expected: u.nrows(), found: v.nrows() });
    }
    for x in [u, v] {
        let norm = x.norm_l2();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!("projector vector has norm {norm}")));
        }
    }
    let c = dot(u, v);
    Ok((2.0 * (1.0 - c * c)).max(0.0).sqrt())
}

/// `max_{i <= m} |emp_i - pop_i| / pop_i`.
pub fn relative_eig_error(empirical: &[f64], population: &[f64], m: usize) -> Result<f64> {
    if m > empirical.len() || m > population.len() {
        return Err(Error::InvalidParameter(format!(
            "need {m} eigenvalues, have {} empirical and {} population",
            empirical.len(),
            population.len()
        )));
    }
    let mut worst = 0.0f64;
    for i in 0..m {
        if population[i] == 0.0 {
            return Err(Error::InvalidParameter(format!("population eigenvalue {i} is zero")));
        }
        worst = worst.max((empirical[i] - population[i]).abs() / population[i]);
    }
    Ok(worst)
}

/// Relative rank `r_i = sum_{k != i} l_k / |l_i - l_k| + l_i / min adjacent gap`
/// (`i` 1-based). Repeated eigenvalues give `+inf`.
pub fn relative_rank(population: &[f64], i: usize) -> Result<f64> {
    if i == 0 || i > population.len() {
        return Err(Error::InvalidParameter(format!("index {i} outside 1..={}", population.len())));
    }
    let li = population[i - 1];
    let mut sum = 0.0;
    for (k, &lk) in population.iter().enumerate() {
        if k + 1 == i {
            continue;
        }
        let gap = (li - lk).abs();
        if gap == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += lk / gap;
    }
    let mut gap = f64::INFINITY;
    if i > 1 {
        gap = gap.min(population[i - 2] - li);
    }
    if i < population.len() {
        gap = gap.min(li - population[i]);
    }
    if gap <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(sum + li / gap)
}

/// RKHS gap between the exact posterior mean and the one produced by the
/// shifted eigenvector policy `s_j = u_{j+1}`, `j = 1..n-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InconsistencyReport {
    pub n: usize,
    /// `mu_1 / (mu_1 + s2)^2 <u_1, Y>^2`.
    pub closed_form: f64,
    /// `dw^T K dw` with `dw = K_s^{-1} Y - w`.
    pub direct: f64,
}

/// `eig` holds the eigenpairs of `A = K / n`.
pub fn inconsistency_gap(k: &Mat<f64>, sigma2: f64, y: ColRef<'_, f64>, eig: &EigenSystem) -> Result<InconsistencyReport> {
    let n = k.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter("inconsistency gap needs n >= 2".into()));
    }
    let mu1 = n as f64 * eig.values[0];
    let proj = dot(eig.vector(0), y);
    let closed_form = mu1 / ((mu1 + sigma2) * (mu1 + sigma2)) * proj * proj;

    let op = Shifted::new(k, sigma2);
    let policy = Policy::custom(eig.vectors.subcols(1, n - 1).to_owned());
    let state = run_itergp(&op, y, &policy, n - 1)?;
    let ksig = Mat::from_fn(n, n, |i, j| k[(i, j)] + if i == j { sigma2 } else { 0.0 });
    let exact = Cholesky::new(ksig.as_ref())?.solve_col(y);
    let dw = exact - state.weights();
    let direct = dot(dw.as_ref(), (k * &dw).as_ref());
    Ok(InconsistencyReport { n, closed_form, direct })
}

/// `n` points uniform on `[0, 1]^dim` from the named stream.
pub fn uniform_design(dim: usize, n: usize, label: &str, seed: u64) -> Points {
    let mut r = rng::stream(label, n, seed, "design");
    let coords = (0..n * dim).map(|_| r.random::<f64>()).collect();
    Points::new(dim, coords).expect("dimension is positive")
}

/// Eigenvalues of `A = K / n`, descending and padded with zeros to length `n`.
///
/// Series kernels with truncation `J < n` use the `J x J` matrix
/// `(1/n) L^{1/2} Phi^T Phi L^{1/2}`, which has the same nonzero spectrum.
pub fn empirical_spectrum(spec: &KernelSpec, xs: &Points) -> Result<Vec<f64>> {
    let n = xs.len();
    let spec = spec.resolved(n);
    if let KernelSpec::Series { truncation: Some(j), .. } = spec {
        if j < n {
            let phi = series_features(&spec, xs)?;
            let lambda = population_eigenvalues(&spec, j)?;
            let scaled = Mat::from_fn(n, j, |i, c| phi[(i, c)] * lambda[c].sqrt());
            let gram = symmetrized(scaled.transpose() * &scaled * faer::Scale(1.0 / n as f64));
            let mut values = dense_eig(gram.as_ref())?.values;
            values.resize(n, 0.0);
            return Ok(values);
        }
    }
    let k = kernel_matrix(&spec, xs)?;
    let values = k.self_adjoint_eigenvalues(faer::Side::Lower).map_err(|_| Error::EigenConvergence)?;
    Ok(values.iter().rev().map(|v| v / n as f64).collect())
}

/// Monte-Carlo comparison of `E sum_{j > m} emp_j` with `sum_{j > m} pop_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialTraceReport {
    pub mean_empirical_tail: f64,
    pub standard_error: f64,
    pub population_tail: f64,
    pub seeds: usize,
}

pub fn partial_trace_check(spec: &KernelSpec, n: usize, m: usize, seeds: &[u64]) -> Result<PartialTraceReport> {
    let spec = spec.resolved(n);
    let (dim, j) = match spec {
        KernelSpec::Series { dim, truncation: Some(j), .. } => (dim, j),
        _ => return Err(Error::NotSeries),
    };
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("no seeds".into()));
    }
    let population = population_eigenvalues(&spec, j)?;
    let population_tail: f64 = population.iter().skip(m).sum();
    let tails: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            let xs = uniform_design(dim, n, "partial-trace", s);
            empirical_spectrum(&spec, &xs).map(|v| v.iter().skip(m).sum())
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_standard_error(&tails);
    Ok(PartialTraceReport { mean_empirical_tail: mean, standard_error: se, population_tail, seeds: seeds.len() })
}

/// Sample mean and its standard error.
pub fn mean_and_standard_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median relative eigenvalue error over seeds, for each design size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationPoint {
    pub n: usize,
    pub median_error: f64,
    pub errors: Vec<f64>,
}

pub fn relative_perturbation_sweep(spec: &KernelSpec, sizes: &[usize], m: usize, seeds: &[u64]) -> Result<Vec<PerturbationPoint>> {
    let dim = spec.input_dim().ok_or(Error::NotSeries)?;
    sizes
        .iter()
        .map(|&n| {
            let spec = spec.resolved(n);
            let population = population_eigenvalues(&spec, m)?;
            let errors = seeds
                .iter()
                .map(|&s| {
                    let xs = uniform_design(dim, n, "perturbation", s);
                    relative_eig_error(&empirical_spectrum(&spec, &xs)?, &population, m)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PerturbationPoint { n, median_error: median(&errors), errors })
        })
        .collect()
}

/// `y / |y|`.
pub fn unit(y: ColRef<'_, f64>) -> Col<f64> {
    let norm = y.norm_l2();
    Col::from_fn(y.nrows(), |i| y[i] / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::itergp::{closed_form_c_ev, run_itergp};
    use crate::kernels::SeriesDecay;
    use crate::spectral::normalized_eig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let mut m = &b * b.transpose();
        for i in 0..n {
            m[(i, i)] += 0.2;
        }
        m
    }

    fn matern_problem(n: usize, seed: u64) -> (Mat<f64>, Col<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let k = kernel_matrix(&KernelSpec::matern(0.6), &Points::from_scalars(&xs)).unwrap();
        let y = Col::from_fn(n, |i| (5.0 * xs[i]).sin() + 0.2 * (rng.random::<f64>() - 0.5));
        (k, y)
    }

    #[test]
    fn kl_trivial_cases() {
        let cov = random_spd(4, 1);
        let mu = Col::from_fn(4, |i| i as f64);
        assert!(kl_gaussians(mu.as_ref(), cov.as_ref(), mu.as_ref(), cov.as_ref()).unwrap().abs() < 1e-12);
        let one = Mat::from_fn(1, 1, |_, _| 1.0);
        let a = Col::from_fn(1, |_| 0.0);
        let b = Col::from_fn(1, |_| 1.0);
        assert!((kl_gaussians(a.as_ref(), one.as_ref(), b.as_ref(), one.as_ref()).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let c1 = random_spd(4, 2);
        let c2 = random_spd(4, 3);
        let m1 = Col::from_fn(4, |i| 0.1 * i as f64);
        let m2 = Col::from_fn(4, |i| -0.2 * i as f64 + 0.3);
        let kl = kl_gaussians(m1.as_ref(), c1.as_ref(), m2.as_ref(), c2.as_ref()).unwrap();
        let ch1 = Cholesky::new(c1.as_ref()).unwrap();
        let ch2 = Cholesky::new(c2.as_ref()).unwrap();
        // sample x ~ N1 through the Cholesky factor of c1
        let chol_l = {
            let llt = c1.llt(faer::Side::Lower).unwrap();
            llt.L().to_owned()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = 1_000_000;
        let mut vals = Vec::with_capacity(samples);
        let half_logdet = 0.5 * (ch2.log_det() - ch1.log_det());
        for _ in 0..samples {
            let z: Col<f64> = Col::from_fn(4, |_| StandardNormal.sample(&mut rng));
            let x = &m1 + &chol_l * &z;
            let d2 = &x - &m2;
            let q2 = dot(d2.as_ref(), ch2.solve_col(d2.as_ref()).as_ref());
            let q1: f64 = z.squared_norm_l2();
            vals.push(half_logdet + 0.5 * (q2 - q1));
        }
        let (mean, se) = mean_and_standard_error(&vals);
        assert!((mean - kl).abs() <= 3.0 * se, "kl={kl} mc={mean}±{se}");
    }

    #[test]
    fn kl_decomposition_consistency() {
        let (k, y) = matern_problem(40, 5);
        let s2 = 0.04;
        let eig = normalized_eig(k.as_ref()).unwrap();
        for m in [0, 3, 10, 25] {
            let c = closed_form_c_ev(&eig, m, s2, 40).unwrap();
            let r = kl_decomposition(k.as_ref(), s2, &c, y.as_ref()).unwrap();
            assert!(r.term_logdet <= 1e-10);
            assert!((r.sum_of_terms() - 2.0 * r.direct).abs() <= 1e-6 * r.direct.max(1.0), "{r:?}");
            // trace term from the eigen-diagonal formula
            let want: f64 = eig.values[m..].iter().map(|l| 40.0 * l / s2).sum();
            assert!((r.term_trace - want).abs() <= 1e-6 * want.max(1.0));
        }
    }

    #[test]
    fn kl_zero_at_full_rank_and_prior_at_zero() {
        let (k, y) = matern_problem(15, 6);
        let s2 = 0.04;
        let eig = normalized_eig(k.as_ref()).unwrap();
        let full = kl_decomposition(k.as_ref(), s2, &closed_form_c_ev(&eig, 15, s2, 15).unwrap(), y.as_ref()).unwrap();
        for v in [full.term_trace, full.term_quadratic, full.term_logdet, full.direct] {
            assert!(v.abs() < 1e-6);
        }
        let zero = kl_decomposition(k.as_ref(), s2, &LowRankPrecision::zero(15), y.as_ref()).unwrap();
        let chol = Cholesky::new(Mat::from_fn(15, 15, |i, j| k[(i, j)] + if i == j { s2 } else { 0.0 }).as_ref()).unwrap();
        let post_mean = &k * chol.solve_col(y.as_ref());
        let post_cov = chol.solve_mat(k.as_ref()) * faer::Scale(s2);
        let prior_kl = kl_gaussians(Col::<f64>::zeros(15).as_ref(), k.as_ref(), post_mean.as_ref(), symmetrized(post_cov).as_ref()).unwrap();
        assert!((zero.direct - prior_kl).abs() < 1e-8 * prior_kl.max(1.0));
    }

    #[test]
    fn kl_non_increasing_for_nested_ev() {
        let (k, y) = matern_problem(30, 7);
        let eig = normalized_eig(k.as_ref()).unwrap();
        let mut prev = f64::INFINITY;
        for m in 0..=30 {
            let c = closed_form_c_ev(&eig, m, 0.04, 30).unwrap();
            let r = kl_decomposition(k.as_ref(), 0.04, &c, y.as_ref()).unwrap();
            assert!(r.direct <= prev + 1e-8);
            prev = r.direct;
        }
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mse(&[1.5, 2.5], &[1.0, 2.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn projector_distances() {
        let u = Col::from_fn(2, |i| [1.0, 0.0][i]);
        let v = Col::from_fn(2, |i| [0.0, 1.0][i]);
        let h = Col::from_fn(2, |_| std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(projector_hs_distance(u.as_ref(), u.as_ref()).unwrap(), 0.0);
        assert!((projector_hs_distance(u.as_ref(), v.as_ref()).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((projector_hs_distance(u.as_ref(), h.as_ref()).unwrap() - 1.0).abs() < 1e-12);
        let neg = -&u;
        assert_eq!(projector_hs_distance(u.as_ref(), neg.as_ref()).unwrap(), 0.0);
        assert!(projector_hs_distance(u.as_ref(), (&u * faer::Scale(2.0)).as_ref()).is_err());
    }

    #[test]
    fn relative_errors_and_rank() {
        assert_eq!(relative_eig_error(&[1.0, 0.5], &[1.0, 0.5], 2).unwrap(), 0.0);
        assert_eq!(relative_eig_error(&[2.0, 0.5], &[1.0, 0.5], 2).unwrap(), 1.0);
        let r = relative_rank(&[0.5, 0.25, 0.125], 1).unwrap();
        assert!((r - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(relative_rank(&[0.5, 0.5, 0.1], 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn relative_rank_grows_for_polynomial_decay() {
        let lam: Vec<f64> = (1..=400).map(|j| (j as f64).powi(-2)).collect();
        let r: Vec<f64> = [5, 10, 20, 40].iter().map(|&i| relative_rank(&lam, i).unwrap()).collect();
        assert!(r.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn inconsistency_closed_form_matches_direct() {
        let (k, y) = matern_problem(20, 8);
        let eig = normalized_eig(k.as_ref()).unwrap();
        let rep = inconsistency_gap(&k, 0.04, y.as_ref(), &eig).unwrap();
        assert!((rep.closed_form - rep.direct).abs() <= 1e-8 * rep.closed_form.max(1.0), "{rep:?}");
        // data orthogonal to the leading eigenvector carries no gap
        let u1 = eig.vector(0);
        let c = dot(u1, y.as_ref());
        let y_perp = &y - u1 * faer::Scale(c);
        let rep = inconsistency_gap(&k, 0.04, y_perp.as_ref(), &eig).unwrap();
        assert!(rep.closed_form.abs() < 1e-20 && rep.direct.abs() < 1e-8);
    }

    #[test]
    fn empirical_spectrum_gram_trick() {
        let spec = KernelSpec::series(SeriesDecay::Polynomial { alpha: 1.0, tau: 1.0 }, 1, 12);
        let xs = uniform_design(1, 30, "t", 1);
        let fast = empirical_spectrum(&spec, &xs).unwrap();
        let k = kernel_matrix(&spec, &xs).unwrap();
        let slow = normalized_eig(k.as_ref()).unwrap().values;
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
        // trace identity: (1/n) sum_i k(x_i, x_i)
        let trace: f64 = (0..30).map(|i| k[(i, i)]).sum::<f64>() / 30.0;
        assert!((fast.iter().sum::<f64>() - trace).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_edges() {
        let spec = KernelSpec::series(SeriesDecay::Polynomial { alpha: 1.0, tau: 1.0 }, 1, 64);
        let full = partial_trace_check(&spec, 20, 20, &[1, 2]).unwrap();
        assert!(full.mean_empirical_tail.abs() < 1e-12);
        let seeds: Vec<u64> = (0..40).collect();
        let all = partial_trace_check(&spec, 50, 0, &seeds).unwrap();
        assert!((all.mean_empirical_tail - all.population_tail).abs() <= 4.0 * all.standard_error.max(1e-3));
    }

    #[test]
    fn perturbation_sweep_runs() {
        let spec = KernelSpec::series(SeriesDecay::Polynomial { alpha: 1.0, tau: 1.0 }, 1, 128);
        let pts = relative_perturbation_sweep(&spec, &[50, 100], 3, &[1, 2, 3]).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| p.median_error.is_finite() && p.errors.len() == 3));
    }

    #[test]
    fn median_and_se() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, se) = mean_and_standard_error(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ev_run_state_is_within_kl_tolerance_of_closed_form() {
        let (k, y) = matern_problem(25, 9);
        let s2 = 0.04;
        let eig = normalized_eig(k.as_ref()).unwrap();
        let st = run_itergp(&Shifted::new(&k, s2), y.as_ref(), &Policy::ev(&eig, 8).unwrap(), 8).unwrap();
        let a = kl_decomposition(k.as_ref(), s2, &st.precision(), y.as_ref()).unwrap();
        let b = kl_decomposition(k.as_ref(), s2, &closed_form_c_ev(&eig, 8, s2, 25).unwrap(), y.as_ref()).unwrap();
        assert!((a.direct - b.direct).abs() < 1e-8 * b.direct.max(1.0));
    }
}
