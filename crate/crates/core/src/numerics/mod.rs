//! Dense complex Hermitian kernels and the small solvers shared by every
//! design algorithm.
//!
//! Matrices are `nalgebra` dense matrices of `Complex64`. Anything that must
//! stay Hermitian goes through [`HermitianMatrix`], which symmetrizes on
//! construction so rounding never accumulates into a visibly non-Hermitian
//! intermediate.

mod barrier;
mod hermitian;
mod pgd;
mod scalar;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

pub use barrier::{barrier_newton, BarrierOutcome, BarrierSettings, ConvexProgram, ExpAffine, ExpTerm};
pub use hermitian::{
    evd, hermitian_part, joint_eigenbasis, psd_project, spd_inverse, EigenDecomposition,
    HermitianMatrix, JointBasis, SPD_THRESHOLD,
};
pub use pgd::{pgd_minimize, Iterate, PgdOutcome, PgdSettings};
pub use scalar::{bisect, polynomial_value, quartic_positive_root};

use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = nalgebra::DMatrix<Complex64>;

/// Shared flag that lets a caller stop a long solve between iterations.
#[derive(Clone, Debug, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

pub(crate) fn is_cancelled(token: &Option<CancelToken>) -> bool {
    token.as_ref().is_some_and(CancelToken::is_cancelled)
}

/// `Re Tr(Aᴴ B)`, the real inner product on complex matrices.
pub fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Real part of the trace.
pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// `Tr(W Wᴴ)`, i.e. the squared Frobenius norm.
pub fn power(w: &CMat) -> f64 {
    w.norm_squared()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn real_diagonal(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(values[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Frobenius norm of `A − Aᴴ` relative to `‖A‖`, zero for exactly Hermitian input.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let scale = a.norm().max(f64::MIN_POSITIVE);
    (a - a.adjoint()).norm() / scale
}

pub(crate) fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
