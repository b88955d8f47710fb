//! Iterative GP approximation: rank-one precision updates driven by a policy
//! of actions, the closed-form precisions of the eigenvector, Lanczos and CG
//! policies, and the variational inducing-variable solution.

use faer::{Col, ColRef, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, LinearOperator};
use crate::spectral::{CgResult, EigenSystem, LanczosResult};

/// `eta <= DEPENDENT_POLICY * s^T K_sigma s` marks an action as dependent.
pub const DEPENDENT_POLICY: f64 = 1e-12;

/// Which family of actions produced a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyTag {
    Ev,
    Lanczos,
    Cg,
    Custom,
}

/// `C = sum_j weights_j f_j f_j^T` with the factors `f_j` as columns.
#[derive(Debug, Clone)]
pub struct LowRankPrecision {
    pub factors: Mat<f64>,
    pub weights: Vec<f64>,
}

impl LowRankPrecision {
    pub fn zero(n: usize) -> Self {
        Self { factors: Mat::zeros(n, 0), weights: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.factors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    /// `C x` in `O(n m)`.
    pub fn apply(&self, x: ColRef<'_, f64>) -> Col<f64> {
        let coeffs = self.factors.transpose() * x;
        let scaled = Col::from_fn(self.rank(), |j| coeffs[j] * self.weights[j]);
        &self.factors * &scaled
    }

    /// `C X` for a block of columns.
    pub fn apply_mat(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        let mut coeffs = self.factors.transpose() * x;
        for j in 0..self.rank() {
            for c in 0..coeffs.ncols() {
                coeffs[(j, c)] *= self.weights[j];
            }
        }
        &self.factors * &coeffs
    }

    /// `x^T C x`.
    pub fn quadratic(&self, x: ColRef<'_, f64>) -> f64 {
        let coeffs = self.factors.transpose() * x;
        (0..self.rank()).map(|j| self.weights[j] * coeffs[j] * coeffs[j]).sum()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let scaled = Mat::from_fn(n, self.rank(), |i, j| self.factors[(i, j)] * self.weights[j]);
        let mut c = &scaled * self.factors.transpose();
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (c[(i, j)] + c[(j, i)]);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }

    /// First `m` terms.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m > self.rank() {
            return Err(Error::PolicyExhausted { requested: m, available: self.rank() });
        }
        Ok(Self {
            factors: self.factors.subcols(0, m).to_owned(),
            weights: self.weights[..m].to_vec(),
        })
    }
}

/// Running state of the iterative scheme after `m` actions.
///
/// Append-only: a step adds a direction and never touches earlier ones.
#[derive(Debug, Clone)]
pub struct IterGPState {
    pub policy_tag: PolicyTag,
    directions: Vec<Col<f64>>,
    /// `K_sigma d_j`, kept for re-projection.
    kdirections: Vec<Col<f64>>,
    etas: Vec<f64>,
    w: Col<f64>,
}

impl IterGPState {
    pub fn new(n: usize, policy_tag: PolicyTag) -> Self {
        Self {
            policy_tag,
            directions: Vec::new(),
            kdirections: Vec::new(),
            etas: Vec::new(),
            w: Col::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.etas.len()
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    /// Representer weights `w_m = C_m Y`.
    pub fn weights(&self) -> ColRef<'_, f64> {
        self.w.as_ref()
    }

    pub fn direction(&self, j: usize) -> ColRef<'_, f64> {
        self.directions[j].as_ref()
    }

    /// Directions as columns of an `n x m` matrix.
    pub fn directions(&self) -> Mat<f64> {
        Mat::from_fn(self.dim(), self.m(), |i, j| self.directions[j][i])
    }

    pub fn precision(&self) -> LowRankPrecision {
        LowRankPrecision {
            factors: self.directions(),
            weights: self.etas.iter().map(|e| 1.0 / e).collect(),
        }
    }

    /// One update with action `s`: `d = (I - C K_sigma) s`, `eta = s^T K_sigma d`.
    pub fn step<A: LinearOperator>(&mut self, k_sigma: &A, s: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Result<()> {
        let n = self.dim();
        if s.nrows() != n || y.nrows() != n || k_sigma.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: s.nrows() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let ks = k_sigma.apply(s);
        let sks = dot(s, ks.as_ref());
        let mut d = s.to_owned();
        let mut kd = ks.clone();
        // two projection passes; K_sigma d is updated from the stored products
        for _pass in 0..2 {
            for ((dj, kdj), eta_j) in self.directions.iter().zip(&self.kdirections).zip(&self.etas) {
                let c = dot(dj.as_ref(), kd.as_ref()) / eta_j;
                for i in 0..n {
                    d[i] -= c * dj[i];
                    kd[i] -= c * kdj[i];
                }
            }
        }
        let eta = dot(s, kd.as_ref());
        if !(eta > DEPENDENT_POLICY * sks) {
            return Err(Error::DependentPolicy { index: self.m(), eta });
        }
        let step = dot(d.as_ref(), y) / eta;
        for i in 0..n {
            self.w[i] += step * d[i];
        }
        self.directions.push(d);
        self.kdirections.push(kd);
        self.etas.push(eta);
        Ok(())
    }

    /// JSON snapshot; directions only on request.
    pub fn snapshot(&self, include_directions: bool) -> StateSnapshot {
        StateSnapshot {
            policy: self.policy_tag,
            m: self.m(),
            etas: self.etas.clone(),
            w: self.w.iter().copied().collect(),
            directions: include_directions
                .then(|| self.directions.iter().map(|d| d.iter().copied().collect()).collect()),
        }
    }
}

/// Serializable view of an [`IterGPState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub policy: PolicyTag,
    pub m: usize,
    pub etas: Vec<f64>,
    pub w: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
}

/// A finite, ordered stream of actions.
#[derive(Debug, Clone)]
pub struct Policy {
    pub tag: PolicyTag,
    actions: Mat<f64>,
}

impl Policy {
    fn take(tag: PolicyTag, source: MatRef<'_, f64>, m: usize) -> Result<Self> {
        if m > source.ncols() {
            return Err(Error::PolicyExhausted { requested: m, available: source.ncols() });
        }
        Ok(Self { tag, actions: source.subcols(0, m).to_owned() })
    }

    /// Leading empirical eigenvectors.
    pub fn ev(eig: &EigenSystem, m: usize) -> Result<Self> {
        Self::take(PolicyTag::Ev, eig.vectors.as_ref(), m)
    }

    /// Leading Ritz vectors.
    pub fn lanczos(lz: &LanczosResult, m: usize) -> Result<Self> {
        Self::take(PolicyTag::Lanczos, lz.vectors.as_ref(), m)
    }

    /// CG search directions in the order produced.
    pub fn cg(cg: &CgResult, m: usize) -> Result<Self> {
        Self::take(PolicyTag::Cg, cg.directions.as_ref(), m)
    }

    /// Arbitrary actions given as columns.
    pub fn custom(actions: Mat<f64>) -> Self {
        Self { tag: PolicyTag::Custom, actions }
    }

    pub fn len(&self) -> usize {
        self.actions.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.ncols() == 0
    }

    pub fn action(&self, j: usize) -> ColRef<'_, f64> {
        self.actions.col(j)
    }
}

/// Runs `m` steps of the scheme with the first `m` actions of `policy`.
pub fn run_itergp<A: LinearOperator>(k_sigma: &A, y: ColRef<'_, f64>, policy: &Policy, m: usize) -> Result<IterGPState> {
    let n = k_sigma.dim();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.nrows() });
    }
    if m > n {
        return Err(Error::InvalidParameter(format!("m = {m} exceeds n = {n}")));
    }
    if m > policy.len() {
        return Err(Error::PolicyExhausted { requested: m, available: policy.len() });
    }
    if policy.actions.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: policy.actions.nrows() });
    }
    let mut state = IterGPState::new(n, policy.tag);
    for j in 0..m {
        state.step(k_sigma, policy.action(j), y)?;
    }
    Ok(state)
}

/// Default Krylov dimension used to produce `m` Lanczos actions.
pub fn default_krylov_dim(m: usize, n: usize) -> usize {
    let log_n = (n.max(2) as f64).ln();
    ((m as f64 * log_n).ceil() as usize).clamp(m.max(1), n)
}

/// `sum_{j <= m} (mu_j + sigma^2)^{-1} u_j u_j^T` with `mu_j = n lambda_j`.
///
/// `eig` holds the eigenpairs of `A = K / n`.
pub fn closed_form_c_ev(eig: &EigenSystem, m: usize, sigma2: f64, n: usize) -> Result<LowRankPrecision> {
    if m > eig.len() {
        return Err(Error::PolicyExhausted { requested: m, available: eig.len() });
    }
    let nf = n as f64;
    Ok(LowRankPrecision {
        factors: eig.vectors.subcols(0, m).to_owned(),
        weights: eig.values[..m].iter().map(|l| 1.0 / (nf * l + sigma2)).collect(),
    })
}

/// Ritz-pair analogue of [`closed_form_c_ev`].
pub fn closed_form_c_lanczos(lz: &LanczosResult, m: usize, sigma2: f64, n: usize) -> Result<LowRankPrecision> {
    if m > lz.krylov_dim {
        return Err(Error::PolicyExhausted { requested: m, available: lz.krylov_dim });
    }
    let nf = n as f64;
    Ok(LowRankPrecision {
        factors: lz.vectors.subcols(0, m).to_owned(),
        weights: lz.values[..m].iter().map(|l| 1.0 / (nf * l + sigma2)).collect(),
    })
}

/// `sum_{j <= m} eta_j^{-1} d_j d_j^T` from recorded CG directions.
pub fn closed_form_c_cg(cg: &CgResult, m: usize) -> Result<LowRankPrecision> {
    if m > cg.steps {
        return Err(Error::PolicyExhausted { requested: m, available: cg.steps });
    }
    Ok(LowRankPrecision {
        factors: cg.directions.subcols(0, m).to_owned(),
        weights: cg.etas[..m].iter().map(|e| 1.0 / e).collect(),
    })
}

/// Optimal variational distribution over the inducing variables
/// `u_j = <u_j, F(X)>` and the moments it induces at the design points.
#[derive(Debug, Clone)]
pub struct VbSolution {
    pub mu_star: Col<f64>,
    pub sigma_star: Mat<f64>,
    pub mean: Col<f64>,
    pub cov: Mat<f64>,
}

/// Titsias' variational solution with eigenvector inducing variables.
pub fn vb_titsias(k: MatRef<'_, f64>, y: ColRef<'_, f64>, sigma2: f64, eig: &EigenSystem, m: usize) -> Result<VbSolution> {
    let n = k.nrows();
    if y.nrows() != n || eig.vectors.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.nrows() });
    }
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!("need 1 <= m <= n, got m = {m}")));
    }
    let top = eig.values[0].abs().max(f64::MIN_POSITIVE);
    for (j, &l) in eig.values[..m].iter().enumerate() {
        if !(l > 1e-14 * top) {
            return Err(Error::SingularInducing { index: j, value: l });
        }
    }
    let u = eig.vectors.subcols(0, m);
    let k_uf = u.transpose() * k;
    let mut k_uu = &k_uf * u;
    symmetrize(&mut k_uu);
    let inv_s2 = 1.0 / sigma2;
    let mut inner = &k_uf * k_uf.transpose() * faer::Scale(inv_s2) + &k_uu;
    symmetrize(&mut inner);
    let inner_chol = Cholesky::new(inner.as_ref()).map_err(|_| Error::SingularInducing { index: 0, value: 0.0 })?;
    let kuf_y = &k_uf * y;
    let mu_star = &k_uu * inner_chol.solve_col(kuf_y.as_ref()) * faer::Scale(inv_s2);
    let mut sigma_star = &k_uu * inner_chol.solve_mat(k_uu.as_ref());
    symmetrize(&mut sigma_star);

    // F | U:  mean A mu*, cov K_ff - A K_uf + A Sigma* A^T with A = K_fu K_uu^{-1}
    let uu_chol = Cholesky::new(k_uu.as_ref()).map_err(|e| match e {
        Error::Factorization { pivot } => Error::SingularInducing { index: pivot, value: 0.0 },
        other => other,
    })?;
    let a_t = uu_chol.solve_mat(k_uf.as_ref()); // K_uu^{-1} K_uf
    let mean = a_t.transpose() * &mu_star;
    let mut cov = k.to_owned() - k_uf.transpose() * &a_t + a_t.transpose() * (&sigma_star * &a_t);
    symmetrize(&mut cov);
    Ok(VbSolution { mu_star, sigma_star, mean, cov })
}

fn symmetrize(m: &mut Mat<f64>) {
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
