//! Covariance kernels, kernel-matrix assembly and truncated random-series
//! priors with known population eigenvalues.

mod bessel;

pub use bessel::bessel_k;

use std::fmt;
use std::sync::Arc;

use faer::{Col, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetrize_from_lower;

/// Eigenvalue decay of a truncated random-series prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SeriesDecay {
    /// `lambda_j = tau^2 j^(-1 - 2 alpha / d)`.
    Polynomial { alpha: f64, tau: f64 },
    /// `lambda_j = exp(-tau j^(1/d))`.
    Exponential { tau: f64 },
}

/// Kernel family and hyperparameters.
///
/// Serialized as `{"kind": "matern" | "sqexp" | "series", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// Matérn with unit length scale, regularity `alpha`.
    Matern { alpha: f64 },
    /// `exp(-|x - y|^2 / b^2)`.
    #[serde(rename = "sqexp")]
    SqExp { bandwidth: f64 },
    /// `sum_{j <= J} lambda_j phi_j(x) phi_j(y)` with the tensor cosine basis on `[0, 1]^d`.
    Series {
        decay: SeriesDecay,
        #[serde(default = "one")]
        dim: usize,
        /// `J`; when absent, `max(4 n, 1024)` for the design at hand.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<usize>,
    },
}

fn one() -> usize {
    1
}

/// Truncation used for series kernels when none is given.
pub fn default_truncation(n: usize) -> usize {
    (4 * n).max(1024)
}

impl KernelSpec {
    pub fn matern(alpha: f64) -> Self {
        KernelSpec::Matern { alpha }
    }

    pub fn sqexp(bandwidth: f64) -> Self {
        KernelSpec::SqExp { bandwidth }
    }

    pub fn series(decay: SeriesDecay, dim: usize, truncation: usize) -> Self {
        KernelSpec::Series { decay, dim, truncation: Some(truncation) }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            KernelSpec::Matern { alpha } => positive("alpha", alpha),
            KernelSpec::SqExp { bandwidth } => positive("bandwidth", bandwidth),
            KernelSpec::Series { decay, dim, truncation } => {
                if dim == 0 {
                    return Err(Error::InvalidParameter("series dimension must be >= 1".into()));
                }
                if truncation == Some(0) {
                    return Err(Error::InvalidParameter("series truncation must be >= 1".into()));
                }
                match decay {
                    SeriesDecay::Polynomial { alpha, tau } => {
                        positive("alpha", alpha)?;
                        positive("tau", tau)
                    }
                    SeriesDecay::Exponential { tau } => positive("tau", tau),
                }
            }
        }
    }

    /// Input dimension the kernel requires, if it fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::Series { dim, .. } => Some(*dim),
            _ => None,
        }
    }

    /// Fills in the default truncation for a design of size `n`.
    pub fn resolved(&self, n: usize) -> KernelSpec {
        match self {
            KernelSpec::Series { decay, dim, truncation: None } => KernelSpec::Series {
                decay: *decay,
                dim: *dim,
                truncation: Some(default_truncation(n)),
            },
            other => other.clone(),
        }
    }

    fn compile(&self, n_hint: usize) -> Result<Compiled> {
        self.validate()?;
        Ok(match *self {
            KernelSpec::Matern { alpha } => Compiled::Matern {
                alpha,
                scale: (2.0 * alpha).sqrt(),
                log_normalizer: bessel::matern_log_normalizer(alpha),
            },
            KernelSpec::SqExp { bandwidth } => Compiled::SqExp { inv_b2: 1.0 / (bandwidth * bandwidth) },
            KernelSpec::Series { decay, dim, truncation } => {
                let j = truncation.unwrap_or_else(|| default_truncation(n_hint));
                Compiled::Series(SeriesBasis::new(decay, dim, j))
            }
        })
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Matern { alpha } => write!(f, "matern(alpha={alpha})"),
            KernelSpec::SqExp { bandwidth } => write!(f, "sqexp(b={bandwidth})"),
            KernelSpec::Series { decay, dim, truncation } => {
                write!(f, "series({decay:?}, d={dim}, J={truncation:?})")
            }
        }
    }
}

/// `n` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates cannot be split into points of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    /// One-dimensional points.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self { dim: 1, data: xs.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.data
    }

    /// Concatenation of `self` and `other`.
    pub fn concat(&self, other: &Points) -> Result<Points> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Points { dim: self.dim, data })
    }
}

/// Ground-truth regression function `f_0`.
pub type Truth = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Regression data `Y_i = f_0(X_i) + sigma * eps_i`.
#[derive(Clone)]
pub struct Dataset {
    pub x: Points,
    pub y: Vec<f64>,
    /// Noise standard deviation.
    pub sigma: f64,
    pub truth: Option<Truth>,
}

impl fmt::Debug for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dataset")
            .field("n", &self.len())
            .field("dim", &self.x.dim())
            .field("sigma", &self.sigma)
            .field("has_truth", &self.truth.is_some())
            .finish()
    }
}

impl Dataset {
    pub fn new(x: Points, y: Vec<f64>, sigma: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidParameter("dataset needs at least one point".into()));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("noise level must be positive, got {sigma}")));
        }
        if x.coords().iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self { x, y, sigma, truth: None })
    }

    pub fn with_truth(mut self, truth: Truth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn y_col(&self) -> Col<f64> {
        Col::from_fn(self.y.len(), |i| self.y[i])
    }

    /// `f_0(X_i)` when the truth is known.
    pub fn truth_values(&self) -> Option<Vec<f64>> {
        self.truth.as_ref().map(|f| self.x.iter().map(|p| f(p)).collect())
    }
}

/// Tensor-product cosine basis with its eigenvalue sequence.
#[derive(Debug, Clone)]
struct SeriesBasis {
    /// Multi-indices `(k_1, ..., k_d)` with `k >= 1`, graded by total degree.
    indices: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
    max_index: usize,
}

impl SeriesBasis {
    fn new(decay: SeriesDecay, dim: usize, truncation: usize) -> Self {
        let indices = graded_multi_indices(dim, truncation);
        let max_index = indices.iter().flatten().copied().max().unwrap_or(1);
        let eigenvalues = (1..=truncation).map(|j| series_eigenvalue(decay, dim, j)).collect();
        Self { indices, eigenvalues, max_index }
    }

    /// `phi_k(t)` for `k = 1..=max_index` along one coordinate.
    fn cosines(&self, t: f64) -> Vec<f64> {
        let sqrt2 = std::f64::consts::SQRT_2;
        (1..=self.max_index)
            .map(|k| if k == 1 { 1.0 } else { sqrt2 * (std::f64::consts::PI * (k - 1) as f64 * t).cos() })
            .collect()
    }

    /// All basis functions at one point.
    fn features(&self, x: &[f64]) -> Vec<f64> {
        let per_dim: Vec<Vec<f64>> = x.iter().map(|&t| self.cosines(t)).collect();
        self.indices
            .iter()
            .map(|multi| multi.iter().enumerate().map(|(d, &k)| per_dim[d][k - 1]).product())
            .collect()
    }
}

fn series_eigenvalue(decay: SeriesDecay, dim: usize, j: usize) -> f64 {
    let j = j as f64;
    let d = dim as f64;
    match decay {
        SeriesDecay::Polynomial { alpha, tau } => tau * tau * j.powf(-1.0 - 2.0 * alpha / d),
        SeriesDecay::Exponential { tau } => (-tau * j.powf(1.0 / d)).exp(),
    }
}

/// First `count` multi-indices in `N^dim`, ordered by total degree and then
/// lexicographically.
fn graded_multi_indices(dim: usize, count: usize) -> Vec<Vec<usize>> {
    if dim == 1 {
        return (1..=count).map(|k| vec![k]).collect();
    }
    let mut out = Vec::with_capacity(count);
    let mut total = dim;
    while out.len() < count {
        let mut level = Vec::new();
        compositions(dim, total, &mut Vec::with_capacity(dim), &mut level);
        level.sort();
        for idx in level {
            if out.len() == count {
                break;
            }
            out.push(idx);
        }
        total += 1;
    }
    out
}

/// All tuples of `parts` positive integers summing to `total`.
fn compositions(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in 1..=(total - (parts - 1)) {
        prefix.push(first);
        compositions(parts - 1, total - first, prefix, out);
        prefix.pop();
    }
}

enum Compiled {
    Matern { alpha: f64, scale: f64, log_normalizer: f64 },
    SqExp { inv_b2: f64 },
    Series(SeriesBasis),
}

impl Compiled {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Compiled::Matern { alpha, scale, log_normalizer } => {
                let r = *scale * distance(x, y);
                bessel::matern_correlation(*alpha, r, *log_normalizer)
            }
            Compiled::SqExp { inv_b2 } => (-squared_distance(x, y) * inv_b2).exp(),
            Compiled::Series(basis) => {
                let fx = basis.features(x);
                let fy = basis.features(y);
                series_sum(&basis.eigenvalues, &fx, &fy)
            }
        }
    }
}

fn series_sum(lambda: &[f64], fx: &[f64], fy: &[f64]) -> f64 {
    lambda.iter().zip(fx).zip(fy).map(|((l, a), b)| l * (a * b)).sum()
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    squared_distance(x, y).sqrt()
}

fn check_point(spec: &KernelSpec, x: &[f64]) -> Result<()> {
    if let Some(d) = spec.input_dim() {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    Ok(())
}

/// `k(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    check_point(spec, x)?;
    check_point(spec, y)?;
    Ok(spec.compile(0)?.eval(x, y))
}

fn check_points(spec: &KernelSpec, xs: &Points) -> Result<()> {
    if let Some(d) = spec.input_dim() {
        if xs.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: xs.dim() });
        }
    }
    if xs.coords().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    Ok(())
}

/// Empirical kernel matrix `K[i][j] = k(X_i, X_j)`, no jitter.
pub fn kernel_matrix(spec: &KernelSpec, xs: &Points) -> Result<Mat<f64>> {
    check_points(spec, xs)?;
    let n = xs.len();
    let compiled = spec.compile(n)?;
    let mut k = Mat::<f64>::zeros(n, n);
    match &compiled {
        Compiled::Series(basis) => {
            // K = (Phi L^{1/2}) (Phi L^{1/2})^T
            let features = scaled_features(basis, xs);
            let gram = &features * features.transpose();
            k.copy_from(&gram);
            symmetrize_from_lower(&mut k);
        }
        other => {
            for j in 0..n {
                let xj = xs.point(j);
                for i in j..n {
                    k[(i, j)] = other.eval(xs.point(i), xj);
                }
            }
            symmetrize_from_lower(&mut k);
        }
    }
    Ok(k)
}

fn scaled_features(basis: &SeriesBasis, xs: &Points) -> Mat<f64> {
    let n = xs.len();
    let j = basis.eigenvalues.len();
    let roots: Vec<f64> = basis.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let mut phi = Mat::<f64>::zeros(n, j);
    for (i, p) in xs.iter().enumerate() {
        for (c, v) in basis.features(p).into_iter().enumerate() {
            phi[(i, c)] = v * roots[c];
        }
    }
    phi
}

/// Feature matrix `Phi[i][j] = phi_j(X_i)` of a series kernel.
pub fn series_features(spec: &KernelSpec, xs: &Points) -> Result<Mat<f64>> {
    check_points(spec, xs)?;
    match spec.compile(xs.len())? {
        Compiled::Series(basis) => {
            let mut phi = Mat::<f64>::zeros(xs.len(), basis.eigenvalues.len());
            for (i, p) in xs.iter().enumerate() {
                for (c, v) in basis.features(p).into_iter().enumerate() {
                    phi[(i, c)] = v;
                }
            }
            Ok(phi)
        }
        _ => Err(Error::NotSeries),
    }
}

/// `(k(X_i, x))_i`.
pub fn kernel_cross(spec: &KernelSpec, xs: &Points, x: &[f64]) -> Result<Col<f64>> {
    check_points(spec, xs)?;
    check_point(spec, x)?;
    if x.len() != xs.dim() {
        return Err(Error::DimensionMismatch { expected: xs.dim(), found: x.len() });
    }
    let compiled = spec.compile(xs.len())?;
    Ok(Col::from_fn(xs.len(), |i| compiled.eval(xs.point(i), x)))
}

/// `k(X_i, Z_j)` for all design points `X` and probes `Z`, `n x g`.
pub fn kernel_cross_matrix(spec: &KernelSpec, xs: &Points, zs: &Points) -> Result<Mat<f64>> {
    check_points(spec, xs)?;
    check_points(spec, zs)?;
    if xs.dim() != zs.dim() {
        return Err(Error::DimensionMismatch { expected: xs.dim(), found: zs.dim() });
    }
    let compiled = spec.compile(xs.len())?;
    match &compiled {
        Compiled::Series(basis) => {
            let fx = scaled_features(basis, xs);
            let fz = scaled_features(basis, zs);
            Ok(&fx * fz.transpose())
        }
        other => Ok(Mat::from_fn(xs.len(), zs.len(), |i, j| other.eval(xs.point(i), zs.point(j)))),
    }
}

/// `k(z, z)` for each probe.
pub fn kernel_diagonal(spec: &KernelSpec, zs: &Points, n_hint: usize) -> Result<Vec<f64>> {
    check_points(spec, zs)?;
    let compiled = spec.compile(n_hint)?;
    Ok(zs.iter().map(|z| compiled.eval(z, z)).collect())
}

/// Population eigenvalues `lambda_1 > lambda_2 > ...` of a series kernel.
pub fn population_eigenvalues(spec: &KernelSpec, count: usize) -> Result<Vec<f64>> {
    match *spec {
        KernelSpec::Series { decay, dim, truncation } => {
            spec.validate()?;
            if let Some(j) = truncation {
                if count > j {
                    return Err(Error::InvalidParameter(format!(
                        "requested {count} eigenvalues from a series truncated at {j}"
                    )));
                }
            }
            Ok((1..=count).map(|j| series_eigenvalue(decay, dim, j)).collect())
        }
        _ => Err(Error::NotSeries),
    }
}
