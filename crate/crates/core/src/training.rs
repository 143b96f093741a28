//! Training design: the weighted channel/target estimation MSE problem, its
//! water-filling solution for aligned correlations, the least-squares closed
//! form and the mutual-information variant.

use crate::error::{IsacError, Result};
use crate::metrics::mi_ce;
use crate::model::{CorrelationMatrix, TrainingSignal};
use crate::numerics::{
    bisect, joint_eigenbasis, pgd_minimize, psd_project, quartic_positive_root, CMat, HermitianMatrix, C64,
};
use crate::settings::SolverSettings;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainingMethod {
    ProjectedGradient,
    Waterfilling,
    LeastSquares,
    MutualInformation,
}

#[derive(Clone, Debug)]
pub struct TrainingDesign {
    pub r_x: HermitianMatrix,
    pub signal: TrainingSignal,
    /// Weighted, `M`-normalized estimation MSE (negated MI for the MI method).
    pub objective: f64,
    pub method: TrainingMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-direction training powers of the water-filling solution.
#[derive(Clone, Debug)]
pub struct WaterfillAllocation {
    pub x: Vec<f64>,
    pub mu: f64,
    /// `min_m μ̂_m`, the multiplier at which every direction is still active.
    pub mu_bar: f64,
    pub lambda_h: Vec<f64>,
    pub lambda_g: Vec<f64>,
    pub basis: CMat,
    omega1: f64,
    sigma2: f64,
}

/// Weighted sum of the two estimation MSEs, each divided by `M`.
pub fn p1_objective(r_h: &CorrelationMatrix, r_g: &CorrelationMatrix, r_x: &HermitianMatrix, sigma2: f64, omega1: f64) -> Result<f64> {
    let m = r_h.dim() as f64;
    let scaled = r_x.scale(1.0 / sigma2);
    let mut f = 0.0;
    if omega1 > 0.0 {
        f += omega1 / m * r_h.inverse()?.add(&scaled).trace_inverse()?;
    }
    if omega1 < 1.0 {
        f += (1.0 - omega1) / m * r_g.inverse()?.add(&scaled).trace_inverse()?;
    }
    Ok(f)
}

/// `−(ω₁/Mσ²) A_H⁻² − (ω₂/Mσ²) A_G⁻²` with `A = R⁻¹ + R_X/σ²`.
pub fn p1_gradient(r_h: &CorrelationMatrix, r_g: &CorrelationMatrix, r_x: &HermitianMatrix, sigma2: f64, omega1: f64) -> Result<CMat> {
    let m = r_h.dim() as f64;
    let scaled = r_x.scale(1.0 / sigma2);
    let mut g = CMat::zeros(r_x.dim(), r_x.dim());
    for (weight, r) in [(omega1, r_h), (1.0 - omega1, r_g)] {
        if weight > 0.0 {
            let inv = r.inverse()?.add(&scaled).evd()?.map(|l| l.powi(-2));
            g -= inv.matrix().scale(weight / (m * sigma2));
        }
    }
    Ok(g)
}

pub(crate) fn hermitian_projector(budget: f64) -> impl Fn(&CMat) -> Result<CMat> {
    move |x: &CMat| Ok(psd_project(&HermitianMatrix::from_raw(x.clone()), budget)?.into_matrix())
}

/// `X = [R_X^{1/2}, 0]`, so that `XXᴴ = R_X`.
pub fn recover_training(r_x: &HermitianMatrix, l_ce: usize, budget: f64) -> Result<TrainingSignal> {
    let m = r_x.dim();
    if l_ce < m {
        return Err(IsacError::invalid(format!("training length {l_ce} is shorter than M = {m}")));
    }
    let root = r_x.sqrt_psd()?;
    let mut x = CMat::zeros(m, l_ce);
    x.columns_mut(0, m).copy_from(root.matrix());
    TrainingSignal::new(x, budget)
}

fn check_weight(omega1: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&omega1) {
        return Err(IsacError::invalid(format!("omega1 = {omega1} is outside [0, 1]")));
    }
    Ok(())
}

/// Minimizes the weighted estimation MSE over `{R_X ⪰ 0, Tr R_X ≤ P_CE}` by
/// projected gradient. The problem is convex, so the stationary point is global.
pub fn solve_p1(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    sigma2: f64,
    p_ce: f64,
    l_ce: usize,
    omega1: f64,
    settings: &SolverSettings,
) -> Result<TrainingDesign> {
    check_weight(omega1)?;
    let m = r_h.dim();
    let start = CMat::identity(m, m).scale(p_ce / m as f64);
    let out = pgd_minimize(
        |x: &CMat| p1_objective(r_h, r_g, &HermitianMatrix::from_raw(x.clone()), sigma2, omega1),
        |x: &CMat| p1_gradient(r_h, r_g, &HermitianMatrix::from_raw(x.clone()), sigma2, omega1),
        hermitian_projector(p_ce),
        start,
        &settings.pgd,
        &settings.cancel,
    )
    .map_err(|e| e.context("training design"))?;
    let r_x = HermitianMatrix::from_raw(out.x);
    Ok(TrainingDesign {
        signal: recover_training(&r_x, l_ce, p_ce)?,
        r_x,
        objective: out.objective,
        method: TrainingMethod::ProjectedGradient,
        iterations: out.iterations,
        converged: out.converged,
    })
}

impl WaterfillAllocation {
    fn direction_weights(&self) -> (f64, f64) {
        let m = self.x.len() as f64;
        (self.omega1 / (m * self.sigma2), (1.0 - self.omega1) / (m * self.sigma2))
    }

    /// Left side of the per-direction stationarity condition at power `x`.
    pub fn stationarity(&self, index: usize, x: f64) -> f64 {
        stationarity(self.omega1, self.sigma2, self.x.len(), self.lambda_h[index], self.lambda_g[index], x)
    }

    /// Largest violation of the stationarity and complementary-slackness conditions.
    pub fn kkt_residual(&self) -> f64 {
        (0..self.x.len())
            .map(|i| {
                if self.x[i] > 0.0 {
                    (self.stationarity(i, self.x[i]) - self.mu).abs()
                } else {
                    (self.stationarity(i, 0.0) - self.mu).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn objective(&self) -> f64 {
        let (a, b) = self.direction_weights();
        let s2 = self.sigma2;
        (0..self.x.len())
            .map(|i| {
                let x = self.x[i];
                let mut v = 0.0;
                if a > 0.0 {
                    v += a * s2 / (1.0 / self.lambda_h[i] + x / s2);
                }
                if b > 0.0 {
                    v += b * s2 / (1.0 / self.lambda_g[i] + x / s2);
                }
                v
            })
            .sum()
    }

    /// `R_X = U diag(x) Uᴴ`.
    pub fn gram(&self) -> HermitianMatrix {
        crate::numerics::EigenDecomposition { values: self.x.clone(), basis: self.basis.clone() }.reconstruct()
    }

    /// `X = U [diag(√x), 0]`.
    pub fn signal(&self, l_ce: usize, budget: f64) -> Result<TrainingSignal> {
        let m = self.x.len();
        let mut x = CMat::zeros(m, l_ce);
        for j in 0..m {
            let s = self.x[j].sqrt();
            for i in 0..m {
                x[(i, j)] = self.basis[(i, j)] * C64::new(s, 0.0);
            }
        }
        TrainingSignal::new(x, budget)
    }
}

fn stationarity(omega1: f64, sigma2: f64, m: usize, lambda_h: f64, lambda_g: f64, x: f64) -> f64 {
    let scale = 1.0 / (m as f64 * sigma2);
    let mut v = 0.0;
    if omega1 > 0.0 {
        v += omega1 * scale * (1.0 / lambda_h + x / sigma2).powi(-2);
    }
    if omega1 < 1.0 {
        v += (1.0 - omega1) * scale * (1.0 / lambda_g + x / sigma2).powi(-2);
    }
    v
}

/// Power `x ≥ 0` on one direction at multiplier `μ`, zero when the direction is inactive.
fn direction_power(omega1: f64, sigma2: f64, m: usize, lambda_h: f64, lambda_g: f64, mu: f64) -> Result<f64> {
    if stationarity(omega1, sigma2, m, lambda_h, lambda_g, 0.0) <= mu {
        return Ok(0.0);
    }
    // With y = x/σ², a = 1/λ_H, b = 1/λ_G and c = μMσ²:
    // ω₁(b+y)² + ω₂(a+y)² = c (a+y)²(b+y)².
    let (w1, w2) = (omega1, 1.0 - omega1);
    let (a, b) = (1.0 / lambda_h, 1.0 / lambda_g);
    let c = mu * m as f64 * sigma2;
    let s = a + b;
    let p = a * b;
    let coeffs = [
        c,
        2.0 * c * s,
        c * (s * s + 2.0 * p) - w1 - w2,
        2.0 * c * p * s - 2.0 * w1 * b - 2.0 * w2 * a,
        c * p * p - w1 * b * b - w2 * a * a,
    ];
    Ok(quartic_positive_root(coeffs)? * sigma2)
}

fn allocation(omega1: f64, sigma2: f64, lambda_h: &[f64], lambda_g: &[f64], mu: f64) -> Result<Vec<f64>> {
    let m = lambda_h.len();
    (0..m)
        .map(|i| direction_power(omega1, sigma2, m, lambda_h[i], lambda_g[i], mu))
        .collect()
}

/// Water-filling solution for correlations that share an eigenbasis.
///
/// For a multiplier `μ` every direction solves its stationarity quartic, or
/// gets zero power when its stationarity value at zero is already below `μ`.
/// `μ` is bisected in the log domain until the powers sum to `P_CE`.
pub fn waterfill_training(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    sigma2: f64,
    p_ce: f64,
    omega1: f64,
    settings: &SolverSettings,
) -> Result<WaterfillAllocation> {
    check_weight(omega1)?;
    let basis = joint_eigenbasis(r_h.matrix(), r_g.matrix(), settings.alignment_tol)?;
    let (lambda_h, lambda_g) = (basis.first, basis.second);
    if lambda_h.iter().chain(&lambda_g).any(|&l| !(l > 0.0)) {
        return Err(IsacError::invalid("correlation eigenvalues must be positive"));
    }
    let m = lambda_h.len();
    let mu_hat: Vec<f64> = (0..m).map(|i| stationarity(omega1, sigma2, m, lambda_h[i], lambda_g[i], 0.0)).collect();
    let mu_bar = mu_hat.iter().copied().fold(f64::INFINITY, f64::min);
    let mu_top = mu_hat.iter().copied().fold(0.0, f64::max);

    let total = |log_mu: f64| -> f64 {
        allocation(omega1, sigma2, &lambda_h, &lambda_g, log_mu.exp()).map_or(f64::NAN, |x| x.iter().sum())
    };
    let hi = mu_top.ln();
    let mut lo = mu_bar.ln() - 1.0;
    while total(lo) < p_ce {
        lo -= 2.0;
        if lo < hi - 200.0 {
            return Err(IsacError::numerical("could not bracket the water level"));
        }
    }
    let log_mu = bisect(total, p_ce, lo, hi, settings.bisect_tol)?;
    let mu = log_mu.exp();
    let x = allocation(omega1, sigma2, &lambda_h, &lambda_g, mu)?;
    Ok(WaterfillAllocation { x, mu, mu_bar, lambda_h, lambda_g, basis: basis.basis, omega1, sigma2 })
}

/// Water-filling training packaged as a [`TrainingDesign`].
pub fn solve_p1_structured(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    sigma2: f64,
    p_ce: f64,
    l_ce: usize,
    omega1: f64,
    settings: &SolverSettings,
) -> Result<(WaterfillAllocation, TrainingDesign)> {
    let alloc = waterfill_training(r_h, r_g, sigma2, p_ce, omega1, settings)?;
    let signal = alloc.signal(l_ce, p_ce)?;
    let r_x = alloc.gram();
    let objective = p1_objective(r_h, r_g, &r_x, sigma2, omega1)?;
    let design = TrainingDesign {
        r_x,
        signal,
        objective,
        method: TrainingMethod::Waterfilling,
        iterations: 0,
        converged: true,
    };
    Ok((alloc, design))
}

/// Least-squares optimum `XXᴴ = (P_CE/M) I`.
pub fn solve_p1_ls(m: usize, p_ce: f64, l_ce: usize) -> Result<TrainingDesign> {
    let r_x = HermitianMatrix::identity(m).scale(p_ce / m as f64);
    let signal = recover_training(&r_x, l_ce, p_ce)?;
    Ok(TrainingDesign {
        r_x,
        signal,
        objective: f64::NAN,
        method: TrainingMethod::LeastSquares,
        iterations: 0,
        converged: true,
    })
}

/// Negated weighted estimation MI, each term divided by `M`.
pub fn p1_mi_objective(r_h: &CorrelationMatrix, r_g: &CorrelationMatrix, r_x: &HermitianMatrix, sigma2: f64, omega1: f64) -> Result<f64> {
    let mut f = 0.0;
    if omega1 > 0.0 {
        f -= omega1 * mi_ce(r_h, r_x, sigma2)?;
    }
    if omega1 < 1.0 {
        f -= (1.0 - omega1) * mi_ce(r_g, r_x, sigma2)?;
    }
    Ok(f)
}

/// Gradient of [`p1_mi_objective`]: `−(ω/Mσ²) R^{1/2}(I + R^{1/2}R_X R^{1/2}/σ²)⁻¹R^{1/2}` per term.
pub fn p1_mi_gradient(r_h: &CorrelationMatrix, r_g: &CorrelationMatrix, r_x: &HermitianMatrix, sigma2: f64, omega1: f64) -> Result<CMat> {
    let m = r_h.dim() as f64;
    let mut g = CMat::zeros(r_x.dim(), r_x.dim());
    for (weight, r) in [(omega1, r_h), (1.0 - omega1, r_g)] {
        if weight > 0.0 {
            let s = r.sqrt().matrix();
            let inner = HermitianMatrix::from_raw(s * r_x.matrix() * s).scale(1.0 / sigma2).add_identity(1.0);
            let inv = inner.inverse()?;
            g -= (s * inv.matrix() * s).scale(weight / (m * sigma2));
        }
    }
    Ok(HermitianMatrix::from_raw(g).into_matrix())
}

/// Maximizes the weighted estimation MI over `{R_X ⪰ 0, Tr R_X ≤ P_CE}`.
pub fn solve_p1_mi(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    sigma2: f64,
    p_ce: f64,
    l_ce: usize,
    omega1: f64,
    settings: &SolverSettings,
) -> Result<TrainingDesign> {
    check_weight(omega1)?;
    let m = r_h.dim();
    let start = CMat::identity(m, m).scale(p_ce / m as f64);
    let out = pgd_minimize(
        |x: &CMat| p1_mi_objective(r_h, r_g, &HermitianMatrix::from_raw(x.clone()), sigma2, omega1),
        |x: &CMat| p1_mi_gradient(r_h, r_g, &HermitianMatrix::from_raw(x.clone()), sigma2, omega1),
        hermitian_projector(p_ce),
        start,
        &settings.pgd,
        &settings.cancel,
    )
    .map_err(|e| e.context("MI training design"))?;
    let r_x = HermitianMatrix::from_raw(out.x);
    Ok(TrainingDesign {
        signal: recover_training(&r_x, l_ce, p_ce)?,
        r_x,
        objective: out.objective,
        method: TrainingMethod::MutualInformation,
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exponential_correlation;
    use crate::numerics::identity;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn communication_only_white_channel_is_uniform() {
        let r = CorrelationMatrix::identity(4);
        let d = solve_p1(&r, &r, 1.0, 8.0, 4, 1.0, &settings()).unwrap();
        assert!((d.r_x.matrix() - identity(4).scale(2.0)).norm() < 1e-6);
    }

    #[test]
    fn single_direction_takes_all_power() {
        let rh = CorrelationMatrix::from_eigen(&identity(1), &[0.7]).unwrap();
        let rg = CorrelationMatrix::from_eigen(&identity(1), &[2.0]).unwrap();
        let a = waterfill_training(&rh, &rg, 1.0, 3.5, 0.3, &settings()).unwrap();
        assert!((a.x[0] - 3.5).abs() < 1e-10);
    }

    #[test]
    fn equal_eigenvalues_split_evenly() {
        let rh = CorrelationMatrix::from_eigen(&identity(4), &[1.5; 4]).unwrap();
        let rg = CorrelationMatrix::identity(4);
        let a = waterfill_training(&rh, &rg, 1.0, 6.0, 1.0, &settings()).unwrap();
        for x in &a.x {
            assert!((x - 1.5).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_stationarity_root() {
        // (1 + x)^{-2} = 0.25 → x = 1 with ω₁ = 1, M = 1, σ² = 1, λ_H = 1.
        let x = direction_power(1.0, 1.0, 1, 1.0, 1.0, 0.25).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
        // Equal eigenvalues collapse the two terms into one of weight 1.
        let y = direction_power(0.5, 1.0, 1, 1.0, 1.0, 0.25).unwrap();
        assert!((y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structured_matches_general_on_four_directions() {
        let u = crate::numerics::evd(&crate::numerics::testing::random_hermitian(4, 3)).unwrap().basis;
        let rh = CorrelationMatrix::from_eigen(&u, &[2.0, 1.0, 0.5, 0.25]).unwrap();
        let rg = CorrelationMatrix::from_eigen(&u, &[1.0; 4]).unwrap();
        let mut s = settings();
        s.pgd.rel_tol = 1e-12;
        let (alloc, structured) = solve_p1_structured(&rh, &rg, 1.0, 4.0, 4, 0.5, &s).unwrap();
        let general = solve_p1(&rh, &rg, 1.0, 4.0, 4, 0.5, &s).unwrap();
        assert!((structured.objective - general.objective).abs() <= 1e-5 * general.objective);
        assert!((alloc.objective() - structured.objective).abs() < 1e-12);
        assert!(alloc.kkt_residual() < 1e-6);
        assert!((alloc.x.iter().sum::<f64>() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn inactive_directions_get_no_power() {
        let rh = CorrelationMatrix::from_eigen(&identity(3), &[10.0, 1.0, 0.01]).unwrap();
        let rg = CorrelationMatrix::from_eigen(&identity(3), &[10.0, 1.0, 0.01]).unwrap();
        let a = waterfill_training(&rh, &rg, 1.0, 0.5, 0.5, &settings()).unwrap();
        assert_eq!(a.x[2], 0.0);
        assert!(a.kkt_residual() < 1e-9);
        assert!(a.mu > a.mu_bar);
    }

    #[test]
    fn misaligned_correlations_are_rejected() {
        let rh = exponential_correlation(3, 0.5).unwrap();
        let rg = CorrelationMatrix::from_eigen(&identity(3), &[3.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            waterfill_training(&rh, &rg, 1.0, 1.0, 0.5, &settings()),
            Err(IsacError::MisalignedCorrelations(_))
        ));
    }

    #[test]
    fn least_squares_training() {
        let d = solve_p1_ls(4, 6.0, 6).unwrap();
        assert!((d.signal.power() - 6.0).abs() < 1e-12);
        assert!((d.r_x.matrix() - identity(4).scale(1.5)).norm() < 1e-14);
        let ls = 1.0 * d.r_x.trace_inverse().unwrap();
        assert!((ls - 16.0 / 6.0).abs() < 1e-12);
        let x = d.signal.matrix();
        assert!(x.columns(4, 2).norm() == 0.0);
    }

    #[test]
    fn recovery_reproduces_gram() {
        let r_x = crate::numerics::testing::random_spd(4, 9, 0.0);
        let x = recover_training(&r_x, 6, f64::INFINITY).unwrap();
        assert!((x.gram().matrix() - r_x.matrix()).norm() < 1e-9 * r_x.matrix().norm());
        let id = recover_training(&HermitianMatrix::identity(3), 3, 3.0).unwrap();
        assert!((id.matrix() - identity(3)).norm() < 1e-14);
    }

    #[test]
    fn mi_training_white_channel_is_uniform() {
        let r = CorrelationMatrix::identity(4);
        let d = solve_p1_mi(&r, &r, 1.0, 8.0, 4, 1.0, &settings()).unwrap();
        assert!((d.r_x.matrix() - identity(4).scale(2.0)).norm() < 1e-6);
    }

    #[test]
    fn mi_training_matches_classic_waterfilling() {
        // max Σ log(1 + λ x) with Σx = P: x = (ν − 1/λ)⁺.
        let lambdas = [3.0, 1.0, 0.2];
        let r = CorrelationMatrix::from_eigen(&identity(3), &lambdas).unwrap();
        let p = 2.0;
        let mut s = settings();
        s.pgd.rel_tol = 1e-13;
        let d = solve_p1_mi(&r, &r, 1.0, p, 3, 1.0, &s).unwrap();
        let nu = bisect(|nu| lambdas.iter().map(|l| (nu - 1.0 / l).max(0.0)).sum(), p, 0.0, 10.0, 1e-14).unwrap();
        for (i, l) in lambdas.iter().enumerate() {
            let expected = (nu - 1.0 / l).max(0.0);
            assert!((d.r_x.matrix()[(i, i)].re - expected).abs() < 1e-4, "{i}");
        }
    }
}
