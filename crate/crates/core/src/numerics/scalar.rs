use nalgebra::DMatrix;

use crate::error::{IsacError, Result};

const MAX_BISECTIONS: usize = 200;

/// Finds `x` in `[lo, hi]` with `f(x) = target` for monotone `f`.
///
/// Stops when the bracket is narrower than `tol · max(1, |hi|)`. Fails with
/// [`IsacError::Bracketing`] when `f(lo) − target` and `f(hi) − target` have
/// the same strict sign.
pub fn bisect(f: impl Fn(f64) -> f64, target: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let f_lo = f(lo) - target;
    let f_hi = f(hi) - target;
    if !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(IsacError::numerical("bisection endpoint evaluated to a non-finite value"));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(IsacError::Bracketing {
            lo,
            hi,
            f_lo: f_lo + target,
            f_hi: f_hi + target,
        });
    }
    let increasing = f_hi > 0.0;
    let width = tol * hi.abs().max(1.0);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= width {
            return Ok(mid);
        }
        let v = f(mid) - target;
        if v == 0.0 {
            return Ok(mid);
        }
        if (v > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Horner evaluation; coefficients run from the highest degree down.
pub fn polynomial_value(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

fn polynomial_derivative(coeffs: &[f64], x: f64) -> f64 {
    let n = coeffs.len().saturating_sub(1);
    coeffs[..n]
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, &c)| acc * x + c * (n - i) as f64)
}

/// The unique nonnegative real root of `c4 y⁴ + c3 y³ + c2 y² + c1 y + c0`.
///
/// Roots come from the companion matrix and are polished with Newton steps.
/// Returns [`IsacError::InfeasibleRoot`] when no nonnegative real root exists
/// and [`IsacError::InvalidInput`] when the leading coefficient vanishes.
pub fn quartic_positive_root(coeffs: [f64; 5]) -> Result<f64> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(IsacError::invalid("quartic coefficients must be finite"));
    }
    let lead = coeffs[0];
    if lead == 0.0 {
        return Err(IsacError::invalid("quartic leading coefficient is zero"));
    }
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let mut companion = DMatrix::<f64>::zeros(4, 4);
    for j in 0..4 {
        companion[(0, j)] = -monic[j + 1];
    }
    for i in 1..4 {
        companion[(i, i - 1)] = 1.0;
    }
    let roots = companion.complex_eigenvalues();
    let scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);

    let mut best: Option<f64> = None;
    for z in roots.iter() {
        if z.im.abs() > 1e-6 * scale {
            continue;
        }
        let mut y = z.re;
        for _ in 0..50 {
            let d = polynomial_derivative(&monic, y);
            if d == 0.0 {
                break;
            }
            let step = polynomial_value(&monic, y) / d;
            y -= step;
            if step.abs() <= 1e-15 * y.abs().max(1e-300) {
                break;
            }
        }
        if y >= -1e-12 * scale {
            let y = y.max(0.0);
            best = Some(match best {
                Some(b) if b <= y => b,
                _ => y,
            });
        }
    }
    best.ok_or(IsacError::InfeasibleRoot)
}
