//! Krylov machinery: dense eigendecomposition, Lanczos Ritz pairs, conjugate
//! gradients with direction capture, and the Chebyshev convergence bounds for
//! Ritz values and Ritz vectors.

use faer::{Col, ColRef, Mat, MatRef, Side};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, max_asymmetry, LinearOperator};

/// Relative norm below which a new Krylov direction counts as degenerate.
pub const KRYLOV_BREAKDOWN: f64 = 1e-12;
/// CG curvature threshold relative to `|d|^2`.
pub const CG_BREAKDOWN: f64 = 1e-14;

/// Eigenvalues in descending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> ColRef<'_, f64> {
        self.vectors.col(j)
    }

    /// Same eigenvectors, eigenvalues multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> EigenSystem {
        EigenSystem {
            values: self.values.iter().map(|v| v * factor).collect(),
            vectors: self.vectors.clone(),
        }
    }

    /// `sum_j values_j u_j u_j^T`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let n = self.vectors.nrows();
        let scaled = Mat::from_fn(n, self.len(), |i, j| self.vectors[(i, j)] * self.values[j]);
        &scaled * self.vectors.transpose()
    }
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn normalize_signs(vectors: &mut Mat<f64>) {
    for j in 0..vectors.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..vectors.nrows() {
            let v = vectors[(i, j)];
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..vectors.nrows() {
                vectors[(i, j)] = -vectors[(i, j)];
            }
        }
    }
}

/// Full symmetric eigendecomposition, descending.
pub fn dense_eig(m: MatRef<'_, f64>) -> Result<EigenSystem> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenSystem { values: Vec::new(), vectors: Mat::zeros(0, 0) });
    }
    let asym = max_asymmetry(m);
    if asym > 1e-12 * max_abs(m).max(1.0) {
        return Err(Error::NonSymmetric { max_asymmetry: asym });
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenConvergence)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).rev().map(|j| s[j]).collect();
    let mut vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    normalize_signs(&mut vectors);
    Ok(EigenSystem { values, vectors })
}

/// Eigendecomposition of the normalized matrix `A = K / n`.
pub fn normalized_eig(k: MatRef<'_, f64>) -> Result<EigenSystem> {
    let n = k.nrows() as f64;
    Ok(dense_eig(k)?.scaled(1.0 / n))
}

fn unit_check(v0: ColRef<'_, f64>) -> Result<()> {
    let norm = v0.norm_l2();
    if !norm.is_finite() {
        return Err(Error::NonFinite("starting vector"));
    }
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter(format!("starting vector must have unit norm, got {norm}")));
    }
    Ok(())
}

/// Orthonormal basis of `span{v0, A v0, ..., A^(m-1) v0}` by Gram-Schmidt with
/// a second full orthogonalization pass per column.
pub fn krylov_basis<A: LinearOperator>(op: &A, v0: ColRef<'_, f64>, m: usize) -> Result<Mat<f64>> {
    let n = op.dim();
    if v0.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: v0.nrows() });
    }
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!("Krylov dimension must lie in 1..={n}, got {m}")));
    }
    unit_check(v0)?;
    let mut basis = Mat::<f64>::zeros(n, m);
    basis.col_mut(0).copy_from(v0);
    for k in 1..m {
        let mut w = op.apply(basis.col(k - 1));
        let scale = w.norm_l2();
        for _pass in 0..2 {
            for j in 0..k {
                let c = dot(basis.col(j), w.as_ref());
                for i in 0..n {
                    w[i] -= c * basis[(i, j)];
                }
            }
        }
        let norm = w.norm_l2();
        if !(norm > KRYLOV_BREAKDOWN * scale) || norm == 0.0 {
            return Err(Error::KrylovBreakdown { achieved: k });
        }
        for i in 0..n {
            basis[(i, k)] = w[i] / norm;
        }
    }
    Ok(basis)
}

/// Ritz pairs of an operator on a Krylov space.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Ritz values, descending.
    pub values: Vec<f64>,
    /// Ritz vectors as columns.
    pub vectors: Mat<f64>,
    pub krylov_dim: usize,
    pub v0: Col<f64>,
    /// Orthonormal Krylov basis the Ritz pairs were computed on.
    pub basis: Mat<f64>,
}

impl LanczosResult {
    pub fn vector(&self, j: usize) -> ColRef<'_, f64> {
        self.vectors.col(j)
    }
}

fn columns(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| m.col(j).iter().copied().collect()).collect()
}

impl Serialize for LanczosResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("LanczosResult", 4)?;
        s.serialize_field("values", &self.values)?;
        s.serialize_field("vectors", &columns(&self.vectors))?;
        s.serialize_field("krylov_dim", &self.krylov_dim)?;
        s.serialize_field("v0", &self.v0.iter().copied().collect::<Vec<_>>())?;
        s.end()
    }
}

/// Ritz pairs of `op` on the Krylov space of dimension `m` started at `v0`.
pub fn lanczos<A: LinearOperator>(op: &A, v0: ColRef<'_, f64>, m: usize) -> Result<LanczosResult> {
    let basis = krylov_basis(op, v0, m)?;
    let mut av = Mat::<f64>::zeros(op.dim(), m);
    for j in 0..m {
        let col = op.apply(basis.col(j));
        av.col_mut(j).copy_from(&col);
    }
    let mut projected = basis.transpose() * &av;
    for j in 0..m {
        for i in (j + 1)..m {
            let v = 0.5 * (projected[(i, j)] + projected[(j, i)]);
            projected[(i, j)] = v;
            projected[(j, i)] = v;
        }
    }
    let small = dense_eig(projected.as_ref())?;
    let mut vectors = &basis * &small.vectors;
    normalize_signs(&mut vectors);
    Ok(LanczosResult { values: small.values, vectors, krylov_dim: m, v0: v0.to_owned(), basis })
}

/// Output of [`cg_solve`].
#[derive(Debug, Clone)]
pub struct CgResult {
    /// Final iterate `w_m`.
    pub w: Col<f64>,
    /// Search directions `d_j` as columns.
    pub directions: Mat<f64>,
    /// `d_j^T K_sigma d_j`.
    pub etas: Vec<f64>,
    /// `|Y - K_sigma w_j|` for `j = 0..=steps`.
    pub residual_norms: Vec<f64>,
    pub steps: usize,
}

/// Conjugate gradients for `K_sigma w = Y` from `w_0 = 0`.
///
/// Each new direction is additionally re-conjugated (twice) against all stored
/// ones, which leaves exact-arithmetic iterates unchanged.
pub fn cg_solve<A: LinearOperator>(op: &A, y: ColRef<'_, f64>, m: usize, tol: f64) -> Result<CgResult> {
    let n = op.dim();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.nrows() });
    }
    if m > n {
        return Err(Error::InvalidParameter(format!("at most {n} CG steps possible, {m} requested")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    let y_norm = y.norm_l2();
    let mut w = Col::<f64>::zeros(n);
    let mut r = y.to_owned();
    let mut d = r.clone();
    let mut dirs: Vec<Col<f64>> = Vec::with_capacity(m);
    let mut kdirs: Vec<Col<f64>> = Vec::with_capacity(m);
    let mut etas = Vec::with_capacity(m);
    let mut residual_norms = vec![y_norm];
    let mut rr = dot(r.as_ref(), r.as_ref());

    for step in 0..m {
        if rr.sqrt() <= tol * y_norm || rr == 0.0 {
            break;
        }
        // two passes: once the residual reaches roundoff level a single pass
        // leaves d visibly non-conjugate
        for _ in 0..2 {
            for ((dj, kdj), eta_j) in dirs.iter().zip(&kdirs).zip(&etas) {
                let c = dot(kdj.as_ref(), d.as_ref()) / eta_j;
                for i in 0..n {
                    d[i] -= c * dj[i];
                }
            }
        }
        let kd = op.apply(d.as_ref());
        let eta = dot(d.as_ref(), kd.as_ref());
        let dd = dot(d.as_ref(), d.as_ref());
        if !(eta > CG_BREAKDOWN * dd) {
            return Err(Error::CgBreakdown { step, curvature: eta });
        }
        let t = dot(r.as_ref(), d.as_ref()) / eta;
        for i in 0..n {
            w[i] += t * d[i];
            r[i] -= t * kd[i];
        }
        let rr_new = dot(r.as_ref(), r.as_ref());
        residual_norms.push(rr_new.sqrt());
        let beta = rr_new / rr;
        rr = rr_new;
        etas.push(eta);
        dirs.push(d.clone());
        kdirs.push(kd);
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }

    let steps = etas.len();
    let directions = Mat::from_fn(n, steps, |i, j| dirs[j][i]);
    Ok(CgResult { w, directions, etas, residual_norms, steps })
}

/// Chebyshev polynomial of the first kind, `T_l(x)`.
pub fn chebyshev_t(l: usize, x: f64) -> f64 {
    if l == 0 {
        return 1.0;
    }
    if x.abs() >= 1.0 && l > 32 {
        let magnitude = (l as f64 * x.abs().acosh()).cosh();
        return if x < 0.0 && l % 2 == 1 { -magnitude } else { magnitude };
    }
    let (mut prev, mut cur) = (1.0, x);
    for _ in 1..l {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
        if !cur.is_finite() {
            let magnitude = (l as f64 * x.abs().acosh()).cosh();
            return if x < 0.0 && l % 2 == 1 { -magnitude } else { magnitude };
        }
    }
    cur
}

/// Value of a convergence bound, or the reason its hypotheses fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum Bound {
    Value(f64),
    NotApplicable(&'static str),
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(v),
            Bound::NotApplicable(_) => None,
        }
    }
}

/// Shared pieces of the Ritz value and Ritz vector bounds.
struct BoundParts {
    /// `tan(u_i, v0) kappa_{i,p} / T_{m-i-p}(gamma_i)`.
    core: f64,
    lam_i: f64,
    lam_n: f64,
}

fn bound_parts(i: usize, p: usize, eig: &EigenSystem, lz: &LanczosResult) -> std::result::Result<BoundParts, &'static str> {
    let n = eig.len();
    let m = lz.krylov_dim;
    if i == 0 || i > m {
        return Err("index outside 1..=krylov_dim");
    }
    if m >= n {
        return Err("Krylov dimension must be below n");
    }
    if p > m - i {
        return Err("p exceeds krylov_dim - i");
    }
    let lam = &eig.values;
    let cos = dot(eig.vector(i - 1), lz.v0.as_ref()).abs();
    if cos == 0.0 {
        return Err("starting vector orthogonal to the target eigenvector");
    }
    let tan = (1.0 - cos * cos).max(0.0).sqrt() / cos;
    let lam_i = lam[i - 1];
    let lam_n = lam[n - 1];
    let lam_next = lam[i + p]; // lambda_{i+p+1}
    let spread = lam_next - lam_n;
    let gamma = if spread > 0.0 { 1.0 + 2.0 * (lam_i - lam_next) / spread } else { f64::INFINITY };
    let cheb = chebyshev_t(m - i - p, gamma);
    let mut kappa_p = 1.0;
    for j in (i + 1)..=(i + p) {
        let gap = lam_i - lam[j - 1];
        if gap <= 0.0 {
            return Ok(BoundParts { core: f64::INFINITY, lam_i, lam_n });
        }
        kappa_p *= (lam[j - 1] - lam_n) / gap;
    }
    let core = if cheb.is_infinite() { 0.0 } else { kappa_p * tan / cheb };
    Ok(BoundParts { core, lam_i, lam_n })
}

/// Upper bound on `lambda_i - lambda~_i` for Ritz values of `A`.
///
/// `i` is 1-based; `eig` holds the eigenpairs of the same operator `lz` was
/// computed on.
pub fn lanczos_eigenvalue_bound(i: usize, p: usize, eig: &EigenSystem, lz: &LanczosResult) -> Bound {
    let parts = match bound_parts(i, p, eig, lz) {
        Ok(parts) => parts,
        Err(why) => return Bound::NotApplicable(why),
    };
    let ritz = &lz.values;
    if i > 1 && !(ritz[i - 2] > parts.lam_i) {
        return Bound::NotApplicable("previous Ritz value does not exceed the target eigenvalue");
    }
    let mut kappa = 1.0;
    for &rj in &ritz[..i - 1] {
        kappa *= (rj - parts.lam_n) / (rj - parts.lam_i);
    }
    if parts.core.is_infinite() {
        return Bound::Value(f64::INFINITY);
    }
    let factor = kappa * parts.core;
    Bound::Value((parts.lam_i - parts.lam_n) * factor * factor)
}

/// Index of the Ritz value nearest to eigenvalue `i` (1-based in, 0-based out).
pub fn nearest_ritz(i: usize, eig: &EigenSystem, lz: &LanczosResult) -> usize {
    let target = eig.values[i - 1];
    let mut best = 0;
    for j in 1..lz.values.len() {
        if (lz.values[j] - target).abs() < (lz.values[best] - target).abs() {
            best = j;
        }
    }
    best
}

/// Upper bound on `sin^2` between eigenvector `i` and its nearest Ritz vector.
pub fn lanczos_eigenvector_bound(i: usize, p: usize, eig: &EigenSystem, lz: &LanczosResult) -> Bound {
    let parts = match bound_parts(i, p, eig, lz) {
        Ok(parts) => parts,
        Err(why) => return Bound::NotApplicable(why),
    };
    let lam = &eig.values;
    let mut kappa = 1.0;
    for &lj in &lam[..i - 1] {
        let gap = lj - parts.lam_i;
        if gap <= 0.0 {
            return Bound::Value(f64::INFINITY);
        }
        kappa *= (lj - parts.lam_n) / gap;
    }
    let star = nearest_ritz(i, eig, lz);
    let delta2 = lz
        .values
        .iter()
        .enumerate()
        .filter(|(j, v)| *j != star && **v != lz.values[star])
        .map(|(_, v)| (parts.lam_i - v).abs())
        .fold(f64::INFINITY, f64::min);
    let op_norm = lam[0].abs().max(lam[lam.len() - 1].abs());
    let inflation = if delta2 == 0.0 { f64::INFINITY } else { 1.0 + op_norm / delta2 };
    if parts.core.is_infinite() {
        return Bound::Value(f64::INFINITY);
    }
    let factor = kappa * parts.core;
    Bound::Value(inflation * factor * factor)
}

/// `sin^2` of the angle between two unit vectors.
pub fn sin_squared(u: ColRef<'_, f64>, v: ColRef<'_, f64>) -> f64 {
    let c = dot(u, v);
    (1.0 - c * c).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Cholesky, Scaled, Shifted};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(values: &[f64]) -> Mat<f64> {
        Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    fn random_spd(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let mut m = &b * b.transpose();
        for i in 0..n {
            m[(i, i)] += 0.1;
        }
        m
    }

    fn ones_unit(n: usize) -> Col<f64> {
        Col::from_fn(n, |_| 1.0 / (n as f64).sqrt())
    }

    #[test]
    fn dense_eig_diagonal() {
        let e = dense_eig(diag(&[1.0, 3.0, 2.0]).as_ref()).unwrap();
        assert_eq!(e.values.len(), 3);
        for (got, want) in e.values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!((e.vectors[(1, 0)] - 1.0).abs() < 1e-14);
        assert!((e.vectors[(2, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dense_eig_identity() {
        let e = dense_eig(Mat::<f64>::identity(5, 5).as_ref()).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn dense_eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Mat::from_fn(8, 8, |_, _| rng.random::<f64>());
        let m = &b + b.transpose();
        let e = dense_eig(m.as_ref()).unwrap();
        let diff = &m - e.reconstruct();
        assert!(diff.norm_l2() <= 1e-10 * m.norm_l2());
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn dense_eig_rejects_asymmetric() {
        let mut m = Mat::<f64>::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(matches!(dense_eig(m.as_ref()), Err(Error::NonSymmetric { .. })));
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let e = dense_eig(random_spd(6, 9).as_ref()).unwrap();
        for j in 0..6 {
            let col = e.vector(j);
            let (mut best, mut val) = (0.0f64, 0.0);
            for v in col.iter() {
                if v.abs() > best {
                    best = v.abs();
                    val = *v;
                }
            }
            assert!(val > 0.0);
        }
    }

    #[test]
    fn krylov_identity_cases() {
        let id = Mat::<f64>::identity(3, 3);
        let v0 = ones_unit(3);
        let v = krylov_basis(&id, v0.as_ref(), 1).unwrap();
        assert!((&v.col(0) - &v0).norm_l2() < 1e-15);
        match krylov_basis(&id, v0.as_ref(), 2) {
            Err(Error::KrylovBreakdown { achieved }) => assert_eq!(achieved, 1),
            other => panic!("expected breakdown, got {other:?}"),
        }
    }

    #[test]
    fn krylov_basis_orthonormal() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let v = krylov_basis(&a, ones_unit(3).as_ref(), 3).unwrap();
        let g = v.transpose() * &v;
        assert!((&g - Mat::<f64>::identity(3, 3)).norm_l2() < 1e-10);
    }

    #[test]
    fn lanczos_full_space_recovers_spectrum() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let lz = lanczos(&a, ones_unit(3).as_ref(), 3).unwrap();
        for (got, want) in lz.values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        for j in 0..3 {
            assert!((lz.vectors[(j, j)].abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_single_step_is_rayleigh_quotient() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let lz = lanczos(&a, ones_unit(3).as_ref(), 1).unwrap();
        assert!((lz.values[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ritz_values_below_eigenvalues_and_galerkin() {
        for seed in 0..5 {
            let a = random_spd(30, seed);
            let eig = dense_eig(a.as_ref()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let z = Col::from_fn(30, |_| rng.random::<f64>() - 0.5);
            let v0 = &z / z.norm_l2();
            let lz = lanczos(&a, v0.as_ref(), 8).unwrap();
            for j in 0..8 {
                assert!(lz.values[j] <= eig.values[j] + 1e-8);
                let mut res = &a * lz.vector(j);
                for i in 0..30 {
                    res[i] -= lz.values[j] * lz.vectors[(i, j)];
                }
                for k in 0..8 {
                    assert!(dot(res.as_ref(), lz.basis.col(k)).abs() <= 1e-8 * eig.values[0]);
                }
            }
        }
    }

    #[test]
    fn lanczos_invariant_to_start_sign() {
        let a = random_spd(20, 4);
        let v0 = ones_unit(20);
        let neg = -&v0;
        let p = lanczos(&a, v0.as_ref(), 6).unwrap();
        let q = lanczos(&a, neg.as_ref(), 6).unwrap();
        for j in 0..6 {
            assert!((p.values[j] - q.values[j]).abs() < 1e-10);
        }
        assert!((&p.vectors - &q.vectors).norm_l2() < 1e-10);
    }

    #[test]
    fn cg_trivial_cases() {
        let two = diag(&[2.0, 2.0, 2.0]);
        let y = Col::from_fn(3, |i| i as f64 + 1.0);
        let res = cg_solve(&two, y.as_ref(), 1, 0.0).unwrap();
        for i in 0..3 {
            assert_eq!(res.w[i], y[i] / 2.0);
        }
        let a = diag(&[2.0, 3.0]);
        let y = Col::from_fn(2, |i| [2.0, 3.0][i]);
        let res = cg_solve(&a, y.as_ref(), 2, 0.0).unwrap();
        assert!((res.w[0] - 1.0).abs() < 1e-12 && (res.w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cg_full_run_solves_and_is_conjugate() {
        let a = random_spd(10, 7);
        let y = Col::from_fn(10, |i| (i as f64).sin());
        let res = cg_solve(&a, y.as_ref(), 10, 0.0).unwrap();
        let exact = Cholesky::new(a.as_ref()).unwrap().solve_col(y.as_ref());
        assert!((&res.w - &exact).norm_l2() <= 1e-8 * exact.norm_l2());
        let g = res.directions.transpose() * &a * &res.directions;
        for i in 0..res.steps {
            for j in 0..res.steps {
                if i != j {
                    assert!(g[(i, j)].abs() <= 1e-8 * res.etas[i].max(res.etas[j]));
                }
            }
        }
    }

    #[test]
    fn cg_objective_non_increasing_and_early_stop() {
        let k = random_spd(25, 2);
        let op = Shifted::new(&k, 0.05);
        let y = Col::from_fn(25, |i| (0.3 * i as f64).cos());
        let mut prev = 0.0;
        for m in 1..=25 {
            let res = cg_solve(&op, y.as_ref(), m, 0.0).unwrap();
            let kw = op.apply(res.w.as_ref());
            let rho = 0.5 * dot(res.w.as_ref(), kw.as_ref()) - dot(y.as_ref(), res.w.as_ref());
            assert!(rho <= prev + 1e-12);
            prev = rho;
        }
        let loose = cg_solve(&op, y.as_ref(), 25, 1e-3).unwrap();
        assert!(loose.steps < 25);
        assert!(*loose.residual_norms.last().unwrap() <= 1e-3 * y.norm_l2());
    }

    #[test]
    fn cg_span_matches_krylov_span() {
        let k = random_spd(15, 11);
        let op = Shifted::new(&k, 0.2);
        let y = Col::from_fn(15, |i| 1.0 + (i as f64).sqrt());
        let v0 = &y / y.norm_l2();
        let m = 5;
        let cg = cg_solve(&op, y.as_ref(), m, 0.0).unwrap();
        let v = krylov_basis(&Scaled::new(&k, 1.0 / 15.0), v0.as_ref(), m).unwrap();
        for j in 0..m {
            let d = cg.directions.col(j);
            let proj = &v * (v.transpose() * d);
            assert!((d - &proj).norm_l2() <= 1e-8 * d.norm_l2());
        }
    }

    #[test]
    fn chebyshev_values() {
        assert_eq!(chebyshev_t(0, 123.0), 1.0);
        assert_eq!(chebyshev_t(2, 2.0), 7.0);
        assert_eq!(chebyshev_t(3, 2.0), 26.0);
        assert!((chebyshev_t(5, 0.3) - (5.0 * 0.3f64.acos()).cos()).abs() < 1e-14);
        let big = chebyshev_t(40, 3.0);
        assert!((big / (40.0 * 3f64.acosh()).cosh() - 1.0).abs() < 1e-12);
        assert_eq!(chebyshev_t(2000, 1e3), f64::INFINITY);
        assert_eq!(chebyshev_t(3, -2.0), -26.0);
    }

    #[test]
    fn eigenvalue_bound_exact_recovery() {
        let a = diag(&[3.0, 2.0, 1.0, 0.5]);
        let eig = dense_eig(a.as_ref()).unwrap();
        let lz = lanczos(&a, Col::from_fn(4, |_| 0.5).as_ref(), 3).unwrap();
        let b = lanczos_eigenvalue_bound(1, 0, &eig, &lz).value().unwrap();
        assert!(eig.values[0] - lz.values[0] <= b + 1e-12);
    }

    #[test]
    fn eigenvalue_bound_decreases_with_krylov_dim() {
        let a = random_spd(20, 21);
        let eig = dense_eig(a.as_ref()).unwrap();
        let v0 = ones_unit(20);
        let mut prev = f64::INFINITY;
        for m in 3..=8 {
            let lz = lanczos(&a, v0.as_ref(), m).unwrap();
            let b = lanczos_eigenvalue_bound(1, 1, &eig, &lz).value().unwrap();
            assert!(eig.values[0] - lz.values[0] <= b + 1e-10);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn bounds_report_invalid_indices() {
        let a = random_spd(6, 1);
        let eig = dense_eig(a.as_ref()).unwrap();
        let lz = lanczos(&a, ones_unit(6).as_ref(), 3).unwrap();
        assert!(matches!(lanczos_eigenvalue_bound(4, 0, &eig, &lz), Bound::NotApplicable(_)));
        assert!(matches!(lanczos_eigenvalue_bound(2, 2, &eig, &lz), Bound::NotApplicable(_)));
        assert!(matches!(lanczos_eigenvector_bound(0, 0, &eig, &lz), Bound::NotApplicable(_)));
    }

    #[test]
    fn lanczos_result_serializes() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let lz = lanczos(&a, ones_unit(3).as_ref(), 2).unwrap();
        let text = serde_json::to_string(&lz).unwrap();
        assert!(text.contains("\"krylov_dim\":2"));
    }
}
