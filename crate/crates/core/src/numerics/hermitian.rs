use nalgebra::linalg::Cholesky;

use super::{all_finite, identity, real_diagonal, CMat, C64};
use crate::error::{IsacError, Result};

/// Smallest eigenvalue accepted by [`spd_inverse`].
pub const SPD_THRESHOLD: f64 = 1e-10;

const MAX_SWEEPS: usize = 64;

/// A square complex matrix kept exactly Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMat);

impl HermitianMatrix {
    /// Symmetrizes `m` as `(m + mᴴ)/2`. Fails for non-square or non-finite input.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(IsacError::invalid(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !all_finite(&m) {
            return Err(IsacError::invalid("matrix has non-finite entries"));
        }
        Ok(Self::from_raw(m))
    }

    /// Symmetrizes without validating. For products that are Hermitian by
    /// construction.
    pub(crate) fn from_raw(m: CMat) -> Self {
        Self(hermitian_part(&m))
    }

    pub fn identity(n: usize) -> Self {
        Self(identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMat::zeros(n, n))
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        Self(real_diagonal(values))
    }

    /// Builds `B Bᴴ`.
    pub fn gram(b: &CMat) -> Self {
        Self::from_raw(b * b.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        super::trace_re(&self.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn add_identity(&self, s: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += C64::new(s, 0.0);
        }
        Self(m)
    }

    pub fn evd(&self) -> Result<EigenDecomposition> {
        evd(self)
    }

    pub fn inverse(&self) -> Result<HermitianMatrix> {
        spd_inverse(self)
    }

    pub fn lambda_max(&self) -> Result<f64> {
        Ok(self.evd()?.values[0])
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(*self.evd()?.values.last().unwrap_or(&0.0))
    }

    /// Hermitian square root; eigenvalues below zero are clipped first.
    pub fn sqrt_psd(&self) -> Result<HermitianMatrix> {
        Ok(self.evd()?.map(|l| l.max(0.0).sqrt()))
    }

    fn cholesky(&self) -> Result<Cholesky<C64, nalgebra::Dyn>> {
        Cholesky::new(self.0.clone()).ok_or_else(|| {
            let eigenvalue = self.lambda_min().unwrap_or(f64::NAN);
            IsacError::Singular {
                eigenvalue,
                threshold: 0.0,
            }
        })
    }

    /// `Tr(A⁻¹)` through a Cholesky factor, `‖L⁻¹‖²_F`.
    pub fn trace_inverse(&self) -> Result<f64> {
        let chol = self.cholesky()?;
        let n = self.dim();
        let linv = chol
            .l()
            .solve_lower_triangular(&identity(n))
            .ok_or_else(|| IsacError::numerical("triangular solve failed"))?;
        Ok(linv.norm_squared())
    }

    /// `A⁻¹ B` for positive definite `A` via Cholesky.
    pub fn solve(&self, b: &CMat) -> Result<CMat> {
        Ok(self.cholesky()?.solve(b))
    }

    /// `log det A` from the Cholesky diagonal.
    pub fn logdet(&self) -> Result<f64> {
        let chol = self.cholesky()?;
        let l = chol.l_dirty();
        Ok((0..self.dim()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
    }

    /// `log det A` from the eigenvalues. Independent of [`Self::logdet`].
    pub fn logdet_evd(&self) -> Result<f64> {
        let e = self.evd()?;
        let min = *e.values.last().unwrap_or(&1.0);
        if min <= 0.0 {
            return Err(IsacError::Singular {
                eigenvalue: min,
                threshold: 0.0,
            });
        }
        Ok(e.values.iter().map(|l| l.ln()).sum())
    }

    /// `‖AB − BA‖_F / (‖A‖_F ‖B‖_F)`.
    pub fn commutator_defect(&self, other: &HermitianMatrix) -> f64 {
        let ab = &self.0 * &other.0;
        let ba = &other.0 * &self.0;
        let scale = (self.0.norm() * other.0.norm()).max(f64::MIN_POSITIVE);
        (ab - ba).norm() / scale
    }
}

impl AsRef<CMat> for HermitianMatrix {
    fn as_ref(&self) -> &CMat {
        &self.0
    }
}

/// `(A + Aᴴ)/2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Eigenvalues in descending order and the matching unitary basis.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub basis: CMat,
}

impl EigenDecomposition {
    /// `U f(Λ) Uᴴ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        self.with_values(&mapped)
    }

    pub fn with_values(&self, values: &[f64]) -> HermitianMatrix {
        let n = self.basis.nrows();
        let mut scaled = self.basis.clone();
        for j in 0..n {
            let v = values[j];
            for i in 0..n {
                scaled[(i, j)] *= v;
            }
        }
        HermitianMatrix::from_raw(scaled * self.basis.adjoint())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.with_values(&self.values)
    }
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
///
/// Each rotation first removes the phase of `a_pq` and then applies the real
/// Jacobi rotation that annihilates it. Eigenvalues are returned in
/// descending order; ties keep their diagonal position order.
pub fn evd(a: &HermitianMatrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if !all_finite(a.matrix()) {
        return Err(IsacError::invalid("eigendecomposition of non-finite matrix"));
    }
    let mut m = a.matrix().clone();
    let mut v = identity(n);
    let scale = m.norm();
    if scale == 0.0 {
        return Ok(EigenDecomposition {
            values: vec![0.0; n],
            basis: v,
        });
    }

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 || r <= 1e-18 * scale {
                    continue;
                }
                let phase = apq / r;
                let conj_phase = phase.conj();
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // J = E·P with E = diag(1, e^{-iφ}) on (p, q) and P the real rotation.
                let j_qp = -conj_phase * s;
                let j_qq = conj_phase * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = akp * c + akq * j_qp;
                    m[(k, q)] = akp * s + akq * j_qq;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * j_qp;
                    v[(k, q)] = vkp * s + vkq * j_qq;
                }
                let jh_pq = -phase * s;
                let jh_qq = phase * c;
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = apk * c + aqk * jh_pq;
                    m[(q, k)] = apk * s + aqk * jh_qq;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal eigenvalues keep first-occurrence order.
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| diag[i]).collect();
    let basis = CMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(EigenDecomposition { values, basis })
}

/// Euclidean projection of `values` onto `{λ ≥ 0, Σλ ≤ budget}`.
fn project_capped_simplex(values: &[f64], budget: f64) -> Vec<f64> {
    let clipped: Vec<f64> = values.iter().map(|&l| l.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return clipped;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - budget) / (k as f64 + 1.0);
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    values.iter().map(|&l| (l - shift).max(0.0)).collect()
}

/// Frobenius-nearest PSD matrix with trace at most `trace_budget`.
pub fn psd_project(a: &HermitianMatrix, trace_budget: f64) -> Result<HermitianMatrix> {
    if !(trace_budget > 0.0) {
        return Err(IsacError::invalid(format!(
            "trace budget must be positive, got {trace_budget}"
        )));
    }
    let e = evd(a)?;
    let projected = project_capped_simplex(&e.values, trace_budget);
    Ok(e.with_values(&projected))
}

/// Inverse of a positive definite matrix; the smallest eigenvalue must exceed
/// [`SPD_THRESHOLD`].
pub fn spd_inverse(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let e = evd(a)?;
    let min = *e.values.last().unwrap_or(&1.0);
    if min <= SPD_THRESHOLD {
        return Err(IsacError::Singular {
            eigenvalue: min,
            threshold: SPD_THRESHOLD,
        });
    }
    Ok(e.map(|l| 1.0 / l))
}

/// Common eigenbasis of two commuting Hermitian matrices.
#[derive(Clone, Debug)]
pub struct JointBasis {
    pub basis: CMat,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Diagonalizes two commuting Hermitian matrices simultaneously.
///
/// Columns are ordered by the first matrix's eigenvalues, descending, with
/// ties broken by the second's. Fails with
/// [`IsacError::MisalignedCorrelations`] when the relative commutator exceeds
/// `tol`.
pub fn joint_eigenbasis(a: &HermitianMatrix, b: &HermitianMatrix, tol: f64) -> Result<JointBasis> {
    if a.dim() != b.dim() {
        return Err(IsacError::invalid("joint eigenbasis of matrices with different sizes"));
    }
    let defect = a.commutator_defect(b);
    if defect > tol {
        return Err(IsacError::MisalignedCorrelations(defect));
    }
    // A generic combination splits every degenerate eigenspace of `a` that `b` separates.
    let na = a.matrix().norm().max(f64::MIN_POSITIVE);
    let nb = b.matrix().norm().max(f64::MIN_POSITIVE);
    let mix = HermitianMatrix::from_raw(a.matrix().scale(1.0 / na) + b.matrix().scale(0.618_033_988_749_895 / nb));
    let e = evd(&mix)?;
    let u = e.basis;
    let da = u.adjoint() * a.matrix() * &u;
    let db = u.adjoint() * b.matrix() * &u;
    let n = a.dim();
    let first: Vec<f64> = (0..n).map(|i| da[(i, i)].re).collect();
    let second: Vec<f64> = (0..n).map(|i| db[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        first[j]
            .partial_cmp(&first[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(second[j].partial_cmp(&second[i]).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(JointBasis {
        basis: CMat::from_fn(n, n, |r, c| u[(r, order[c])]),
        first: order.iter().map(|&i| first[i]).collect(),
        second: order.iter().map(|&i| second[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::testing::random_hermitian;

    fn herm(values: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_real_diagonal(values)
    }

    #[test]
    fn identity_eigenvalues() {
        let e = evd(&HermitianMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let gram = e.basis.adjoint() * &e.basis;
        assert!((gram - identity(3)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let e = evd(&herm(&[-1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![2.0, -1.0]);
        assert!((e.basis[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((e.basis[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction_and_unitarity() {
        for seed in 0..20 {
            let a = random_hermitian(8, seed);
            let e = evd(&a).unwrap();
            let rel = (e.reconstruct().matrix() - a.matrix()).norm() / a.matrix().norm();
            assert!(rel < 1e-9, "seed {seed}: reconstruction {rel:e}");
            let gram = e.basis.adjoint() * &e.basis;
            assert!((gram - identity(8)).norm() < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn evd_rejects_non_finite() {
        let mut m = identity(2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(HermitianMatrix::new(m.clone()).is_err());
        assert!(matches!(
            evd(&HermitianMatrix(m)),
            Err(IsacError::InvalidInput(_))
        ));
    }

    #[test]
    fn projection_of_feasible_matrix_is_identity_map() {
        let a = herm(&[0.5, 0.2, 0.1]);
        let p = psd_project(&a, 1.0).unwrap();
        assert!((p.matrix() - a.matrix()).norm() < 1e-14);
    }

    /// Brute-force oracle: grid over the two projected eigenvalues.
    fn grid_projection(target: [f64; 2], budget: f64) -> [f64; 2] {
        let steps = 2000;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=steps {
            for j in 0..=steps {
                let a = budget * i as f64 / steps as f64;
                let b = budget * j as f64 / steps as f64;
                if a + b > budget + 1e-12 {
                    continue;
                }
                let d = (a - target[0]).powi(2) + (b - target[1]).powi(2);
                if d < best.0 {
                    best = (d, [a, b]);
                }
            }
        }
        best.1
    }

    #[test]
    fn projection_clips_then_caps() {
        let expected = grid_projection([3.0, -1.0], 2.0);
        assert_eq!(expected, [2.0, 0.0]);
        let p = psd_project(&herm(&[3.0, -1.0]), 2.0).unwrap();
        assert!((p.matrix() - herm(&expected).matrix()).norm() < 1e-12);
    }

    #[test]
    fn projection_symmetric_case() {
        let expected = grid_projection([4.0, 4.0], 4.0);
        assert_eq!(expected, [2.0, 2.0]);
        let p = psd_project(&herm(&[4.0, 4.0]), 4.0).unwrap();
        assert!((p.matrix() - herm(&expected).matrix()).norm() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent() {
        for seed in 0..10 {
            let a = random_hermitian(6, 100 + seed);
            let once = psd_project(&a, 2.5).unwrap();
            let twice = psd_project(&once, 2.5).unwrap();
            assert!((once.matrix() - twice.matrix()).norm() < 1e-12);
            assert!(once.trace() <= 2.5 + 1e-12);
        }
    }

    #[test]
    fn projection_rejects_nonpositive_budget() {
        assert!(psd_project(&herm(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn inverse_cases() {
        let inv = spd_inverse(&HermitianMatrix::identity(4)).unwrap();
        assert!((inv.matrix() - identity(4)).norm() < 1e-14);
        let inv = spd_inverse(&herm(&[2.0, 4.0])).unwrap();
        assert!((inv.matrix() - herm(&[0.5, 0.25]).matrix()).norm() < 1e-14);
        for seed in 0..10 {
            let b = random_hermitian(8, 200 + seed);
            let spd = HermitianMatrix::gram(b.matrix()).add_identity(0.1);
            let inv = spd_inverse(&spd).unwrap();
            let resid = (spd.matrix() * inv.matrix() - identity(8)).norm() / (8f64).sqrt();
            assert!(resid < 1e-8);
        }
    }

    #[test]
    fn inverse_reports_singular_eigenvalue() {
        match spd_inverse(&herm(&[1.0, 1e-12])) {
            Err(IsacError::Singular { eigenvalue, .. }) => assert!((eigenvalue - 1e-12).abs() < 1e-20),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn logdet_paths_agree() {
        for seed in 0..10 {
            let b = random_hermitian(8, 300 + seed);
            let spd = HermitianMatrix::gram(b.matrix()).add_identity(0.5);
            let chol = spd.logdet().unwrap();
            let eig = spd.logdet_evd().unwrap();
            assert!((chol - eig).abs() < 1e-9, "{chol} vs {eig}");
            let tr = spd.trace_inverse().unwrap();
            let tr_evd: f64 = spd.evd().unwrap().values.iter().map(|l| 1.0 / l).sum();
            assert!((tr - tr_evd).abs() < 1e-10 * tr_evd);
        }
    }

    #[test]
    fn joint_basis_of_commuting_pair() {
        let u = evd(&random_hermitian(5, 7)).unwrap().basis;
        let a = HermitianMatrix::from_raw(&u * real_diagonal(&[1.0, 1.0, 3.0, 0.5, 2.0]) * u.adjoint());
        let b = HermitianMatrix::from_raw(&u * real_diagonal(&[4.0, 2.0, 1.0, 1.0, 1.0]) * u.adjoint());
        let jb = joint_eigenbasis(&a, &b, 1e-8).unwrap();
        assert_eq!(jb.first.len(), 5);
        let expect_first = [3.0, 2.0, 1.0, 1.0, 0.5];
        let expect_second = [1.0, 1.0, 4.0, 2.0, 1.0];
        for i in 0..5 {
            assert!((jb.first[i] - expect_first[i]).abs() < 1e-10);
            assert!((jb.second[i] - expect_second[i]).abs() < 1e-10);
        }
        let da = jb.basis.adjoint() * a.matrix() * &jb.basis;
        let db = jb.basis.adjoint() * b.matrix() * &jb.basis;
        assert!((da - real_diagonal(&jb.first)).norm() < 1e-10);
        assert!((db - real_diagonal(&jb.second)).norm() < 1e-10);
    }

    #[test]
    fn joint_basis_rejects_non_commuting() {
        let a = herm(&[1.0, 2.0]);
        let mut m = identity(2);
        m[(0, 1)] = C64::new(0.5, 0.0);
        m[(1, 0)] = C64::new(0.5, 0.0);
        let b = HermitianMatrix::new(m).unwrap();
        assert!(matches!(
            joint_eigenbasis(&a, &b, 1e-8),
            Err(IsacError::MisalignedCorrelations(_))
        ));
    }
}
