//! Robust ISAC beamforming by majorization-minimization.
//!
//! Each iteration replaces the weighted objective with a quadratic upper
//! bound that touches it at the current beamformer `W₀`:
//! `Tr(Wᴴ A W) − 2 Re Tr(Πᴴ W) + c` with `A = (ω₁/D)Ψ + (ω₂/M)λI`.
//! The bound is minimized in closed form up to the power multiplier.

use crate::error::{IsacError, Result};
use crate::metrics::{effective_noise, mse_com};
use crate::model::{CorrelationMatrix, SystemConfig};
use crate::numerics::{bisect, is_cancelled, power, real_inner, CMat, EigenDecomposition, HermitianMatrix, C64};
use crate::settings::SolverSettings;

/// Design criterion of the beamforming loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    /// Weighted data and target estimation MSE.
    Mse,
    /// Negated weighted data and target mutual information.
    MutualInformation,
}

/// Fixed data of one beamforming problem.
#[derive(Clone, Debug)]
pub struct BeamformingProblem {
    /// Channel the transmitter designs for (the estimate, or a statistical surrogate).
    pub h: CMat,
    pub r_delta: HermitianMatrix,
    /// `R_G⁻¹ + XXᴴ/σ²`, the target information after training.
    pub r_gprime: HermitianMatrix,
    k: HermitianMatrix,
    k_max: f64,
    logdet_rg: f64,
    pub sigma2: f64,
    pub l_dt: usize,
    pub d: usize,
    pub p_dt: f64,
    pub omega1: f64,
}

impl BeamformingProblem {
    pub fn new(
        h: CMat,
        r_delta: HermitianMatrix,
        r_g: &CorrelationMatrix,
        training_gram: &HermitianMatrix,
        config: &SystemConfig,
    ) -> Result<Self> {
        let m = r_g.dim();
        if h.ncols() != m || r_delta.dim() != m || training_gram.dim() != m {
            return Err(IsacError::invalid("beamforming inputs disagree on the antenna count"));
        }
        let r_gprime = r_g.inverse()?.add(&training_gram.scale(1.0 / config.sigma2));
        let evd = r_gprime.evd()?;
        let k = evd.map(|l| 1.0 / l);
        let k_max = 1.0 / evd.values[m - 1];
        let logdet_rg = r_g.evd().values.iter().map(|l| l.ln()).sum();
        Ok(Self {
            h,
            r_delta,
            r_gprime,
            k,
            k_max,
            logdet_rg,
            sigma2: config.sigma2,
            l_dt: config.l_dt,
            d: config.d,
            p_dt: config.p_dt,
            omega1: config.omega1,
        })
    }

    pub fn m(&self) -> usize {
        self.k.dim()
    }

    fn omega2(&self) -> f64 {
        1.0 - self.omega1
    }

    /// `(R_G′ + L_DT WWᴴ/σ²)`.
    fn sensing_information(&self, w: &CMat) -> HermitianMatrix {
        self.r_gprime.add(&HermitianMatrix::gram(w).scale(self.l_dt as f64 / self.sigma2))
    }

    /// Normalized target estimation MSE.
    pub fn mse_rad(&self, w: &CMat) -> Result<f64> {
        Ok(self.sensing_information(w).trace_inverse()? / self.m() as f64)
    }

    pub fn mse_com(&self, w: &CMat) -> Result<f64> {
        mse_com(&self.h, w, &self.r_delta, self.sigma2)
    }

    /// `ω₁·MSE_com/D + ω₂·MSE_rad/M`.
    pub fn objective(&self, w: &CMat) -> Result<f64> {
        let mut f = 0.0;
        if self.omega1 > 0.0 {
            f += self.omega1 * self.mse_com(w)?;
        }
        if self.omega2() > 0.0 {
            f += self.omega2() * self.mse_rad(w)?;
        }
        Ok(f)
    }

    /// Negated `ω₁·MI_com/D + ω₂·MI_rad/M`.
    pub fn mi_objective(&self, w: &CMat) -> Result<f64> {
        let mut f = 0.0;
        if self.omega1 > 0.0 {
            let gram = HermitianMatrix::from_raw(self.h.adjoint() * &self.h);
            let kappa = effective_noise(w, &self.r_delta, self.sigma2);
            let info = HermitianMatrix::from_raw(w.adjoint() * gram.matrix() * w).scale(1.0 / kappa).add_identity(1.0);
            f -= self.omega1 * info.logdet()? / self.d as f64;
        }
        if self.omega2() > 0.0 {
            let mi = self.logdet_rg + self.sensing_information(w).logdet()?;
            f -= self.omega2() * mi / self.m() as f64;
        }
        Ok(f)
    }

    pub fn criterion_objective(&self, criterion: Criterion, w: &CMat) -> Result<f64> {
        match criterion {
            Criterion::Mse => self.objective(w),
            Criterion::MutualInformation => self.mi_objective(w),
        }
    }

    /// Top-`D` right singular directions of the channel scaled to the full budget.
    pub fn initial_beamformer(&self) -> Result<CMat> {
        let gram = HermitianMatrix::from_raw(self.h.adjoint() * &self.h);
        let basis = gram.evd()?.basis;
        let scale = (self.p_dt / self.d as f64).sqrt();
        Ok(basis.columns(0, self.d).scale(scale))
    }
}

/// Surrogate data built at an expansion point `W₀`.
#[derive(Clone, Debug)]
pub struct SurrogateCoefficients {
    pub criterion: Criterion,
    pub w0: CMat,
    pub q0: HermitianMatrix,
    pub xi0: HermitianMatrix,
    /// `Q₀⁻¹ H W₀`, the receiver at the expansion point.
    pub f: CMat,
    /// Weight on the data-error matrix: identity for MSE, `B₀⁻¹` for MI.
    pub omega_com: HermitianMatrix,
    /// Weight on the target-error matrix: identity for MSE, `A₀⁻¹` for MI.
    pub omega_rad: HermitianMatrix,
    pub psi: HermitianMatrix,
    pub lambda: f64,
    /// Combined linear coefficient `(ω₁/D)Π_com + (ω₂/M)Π_rad`.
    pub pi: CMat,
    /// Combined quadratic coefficient `(ω₁/D)Ψ + (ω₂/M)λI`.
    pub a: HermitianMatrix,
    xi0_inv: HermitianMatrix,
    c: HermitianMatrix,
    kwk: HermitianMatrix,
    h0: f64,
    com_constant: f64,
    rad_constant: f64,
}

/// Builds the majorizer of the chosen criterion at `w0`.
pub fn surrogate_coefficients(problem: &BeamformingProblem, criterion: Criterion, w0: &CMat) -> Result<SurrogateCoefficients> {
    let m = problem.m();
    let d = w0.ncols();
    let sigma2 = problem.sigma2;
    let hw = &problem.h * w0;
    let kappa0 = effective_noise(w0, &problem.r_delta, sigma2);
    let q0 = HermitianMatrix::gram(&hw).add_identity(kappa0);
    let f = q0.solve(&hw)?;

    let (omega_com, com_constant) = match criterion {
        Criterion::Mse => (HermitianMatrix::identity(d), 0.0),
        Criterion::MutualInformation => {
            let b0 = HermitianMatrix::from_raw(CMat::identity(d, d) - hw.adjoint() * &f);
            (b0.inverse()?, b0.logdet()? - d as f64)
        }
    };
    let f_omega = &f * omega_com.matrix();
    let psi = HermitianMatrix::from_raw(problem.h.adjoint() * &f_omega * (problem.h.adjoint() * &f).adjoint())
        .add(&problem.r_delta.scale(real_inner(&f_omega, &f)));
    let pi_com = problem.h.adjoint() * &f_omega;

    let k = &problem.k;
    let kw0 = k.matrix() * w0;
    let xi0 = HermitianMatrix::from_raw(w0.adjoint() * &kw0).add_identity(sigma2 / problem.l_dt as f64);
    let xi0_inv = xi0.inverse()?;
    let (omega_rad, rad_constant) = match criterion {
        Criterion::Mse => (HermitianMatrix::identity(m), 0.0),
        Criterion::MutualInformation => {
            let a0 = HermitianMatrix::from_raw(k.matrix() - &kw0 * xi0_inv.matrix() * kw0.adjoint());
            (a0.inverse()?, a0.logdet()? - m as f64 - problem.logdet_rg)
        }
    };
    // K Ω K, which is K² for the MSE criterion.
    let kwk = HermitianMatrix::from_raw(k.matrix() * omega_rad.matrix() * k.matrix());
    let c = HermitianMatrix::from_raw(xi0_inv.matrix() * w0.adjoint() * kwk.matrix() * w0 * xi0_inv.matrix());
    let lambda = (c.lambda_max()? * problem.k_max).max(1e-12);
    let h0 = crate::numerics::trace_re(&(xi0_inv.matrix() * w0.adjoint() * kwk.matrix() * w0));
    let pi_rad_h = xi0_inv.matrix() * w0.adjoint() * kwk.matrix() + w0.adjoint().scale(lambda)
        - c.matrix() * w0.adjoint() * k.matrix();

    let (w1, w2) = (problem.omega1 / d as f64, problem.omega2() / m as f64);
    let pi = pi_com.scale(w1) + pi_rad_h.adjoint().scale(w2);
    let a = psi.scale(w1).add_identity(w2 * lambda);
    Ok(SurrogateCoefficients {
        criterion,
        w0: w0.clone(),
        q0,
        xi0,
        f,
        omega_com,
        omega_rad,
        psi,
        lambda,
        pi,
        a,
        xi0_inv,
        c,
        kwk,
        h0,
        com_constant,
        rad_constant,
    })
}

/// Value of the majorizer at `w`, evaluated term by term from its expansion.
pub fn surrogate_value(problem: &BeamformingProblem, coeffs: &SurrogateCoefficients, w: &CMat) -> f64 {
    let m = problem.m() as f64;
    let d = w.ncols() as f64;
    let mut value = 0.0;
    if problem.omega1 > 0.0 {
        // Ω-weighted error matrix of the fixed receiver F.
        let hw = &problem.h * w;
        let kappa = effective_noise(w, &problem.r_delta, problem.sigma2);
        let fh_hw = coeffs.f.adjoint() * &hw;
        let e = fh_hw.adjoint() * &fh_hw + (coeffs.f.adjoint() * &coeffs.f).scale(kappa) - &fh_hw - fh_hw.adjoint()
            + CMat::identity(w.ncols(), w.ncols());
        let com = crate::numerics::trace_re(&(coeffs.omega_com.matrix() * e)) + coeffs.com_constant;
        value += problem.omega1 / d * com;
    }
    if problem.omega2() > 0.0 {
        let k = problem.k.matrix();
        let delta = w - &coeffs.w0;
        let g1 = coeffs.xi0_inv.matrix() * coeffs.w0.adjoint() * coeffs.kwk.matrix();
        let g2 = coeffs.c.matrix() * coeffs.w0.adjoint() * k;
        let trace_ok = crate::numerics::trace_re(&(coeffs.omega_rad.matrix() * k));
        let rad = trace_ok - coeffs.h0 - 2.0 * crate::numerics::trace_re(&(&g1 * &delta))
            + 2.0 * crate::numerics::trace_re(&(&g2 * &delta))
            + coeffs.lambda * delta.norm_squared()
            + coeffs.rad_constant;
        value += problem.omega2() / m * rad;
    }
    value
}

/// Minimizer of the majorizer under `Tr(WWᴴ) ≤ P_DT`, with its power multiplier.
pub fn solve_surrogate(coeffs: &SurrogateCoefficients, p_dt: f64, bisect_tol: f64) -> Result<(CMat, f64)> {
    solve_regularized(&coeffs.a, &coeffs.pi, p_dt, bisect_tol)
}

/// `W(μ) = (A + μI)⁻¹ Π` with `μ = 0` when feasible, otherwise `Tr WWᴴ = P`.
pub fn solve_regularized(a: &HermitianMatrix, pi: &CMat, p: f64, bisect_tol: f64) -> Result<(CMat, f64)> {
    if pi.norm() == 0.0 {
        return Ok((CMat::zeros(pi.nrows(), pi.ncols()), 0.0));
    }
    let EigenDecomposition { values, basis } = a.evd()?;
    let rotated = basis.adjoint() * pi;
    let weights: Vec<f64> = (0..values.len()).map(|i| rotated.row(i).norm_squared()).collect();
    let scale = values.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let power_at = |mu: f64| -> f64 {
        values
            .iter()
            .zip(&weights)
            .map(|(&l, &b)| {
                let den = l + mu;
                if den <= 1e-15 * scale {
                    if b > 0.0 { f64::INFINITY } else { 0.0 }
                } else {
                    b / (den * den)
                }
            })
            .sum()
    };
    let mu = if power_at(0.0) <= p {
        0.0
    } else {
        let hi = pi.norm() / p.sqrt();
        bisect(power_at, p, 0.0, hi, bisect_tol)?
    };
    let mut scaled = rotated;
    for i in 0..values.len() {
        let den = values[i] + mu;
        let inv = if den > 1e-15 * scale { 1.0 / den } else { 0.0 };
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= C64::new(inv, 0.0);
        }
    }
    Ok((basis * scaled, mu))
}

/// Objective history of a majorization-minimization run.
#[derive(Clone, Debug, Default)]
pub struct MMTrace {
    /// Beamformer after every iteration, starting with the initial one.
    pub iterates: Vec<CMat>,
    pub objectives: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub converged: bool,
    /// Surrogate solves, including rejected extrapolations.
    pub iterations: usize,
}

/// Majorization-minimization for the chosen criterion.
///
/// With `mm_accelerate`, each recorded step is two plain updates followed by
/// a squared extrapolation that is kept only if one further update from it
/// does at least as well, so the recorded objective still never increases.
pub fn run_mm(
    problem: &BeamformingProblem,
    criterion: Criterion,
    w0: Option<CMat>,
    settings: &SolverSettings,
) -> Result<(CMat, MMTrace)> {
    let mut w = match w0 {
        Some(w) => w,
        None => problem.initial_beamformer()?,
    };
    if power(&w) > problem.p_dt * (1.0 + 1e-9) {
        return Err(IsacError::invalid("initial beamformer exceeds the power budget"));
    }
    let mut f = problem.criterion_objective(criterion, &w)?;
    let mut trace = MMTrace { iterates: vec![w.clone()], objectives: vec![f], ..Default::default() };
    let mut maps = 0;
    let mut step = |w: &CMat| -> Result<(CMat, f64, f64)> {
        if is_cancelled(&settings.cancel) {
            return Err(IsacError::Cancelled { iterations: maps });
        }
        maps += 1;
        let coeffs = surrogate_coefficients(problem, criterion, w)?;
        let (w_new, mu) = solve_surrogate(&coeffs, problem.p_dt, settings.bisect_tol)?;
        let f_new = problem.criterion_objective(criterion, &w_new)?;
        if !f_new.is_finite() {
            return Err(IsacError::numerical_at("beamforming objective became non-finite", &w_new));
        }
        Ok((w_new, mu, f_new))
    };
    let budget = settings.mm_max_iterations;
    let mut used = 0;
    while used < budget {
        let (mut w_new, mut mu, mut f_new) = step(&w)?;
        used += 1;
        if settings.mm_accelerate && used + 2 <= budget && rel_change(f, f_new) >= settings.mm_rel_tol {
            let (w2, mu2, f2) = step(&w_new)?;
            used += 1;
            let r = &w_new - &w;
            let v = &w2 - &w_new - &r;
            (w_new, mu, f_new) = (w2, mu2, f2);
            let (nr, nv) = (r.norm(), v.norm());
            let mut alpha = if nv > 0.0 { -nr / nv } else { -1.0 };
            while alpha < -1.0 && used < budget {
                let mut trial = &w - r.scale(2.0 * alpha) + v.scale(alpha * alpha);
                let p = power(&trial);
                if p > problem.p_dt {
                    trial = trial.scale((problem.p_dt / p).sqrt());
                }
                let (w3, mu3, f3) = step(&trial)?;
                used += 1;
                if f3 <= f_new {
                    (w_new, mu, f_new) = (w3, mu3, f3);
                    break;
                }
                alpha = (alpha - 1.0) / 2.0;
                if alpha > -1.0 + 1e-3 {
                    break;
                }
            }
        }
        let change = rel_change(f, f_new);
        w = w_new;
        f = f_new;
        trace.iterates.push(w.clone());
        trace.objectives.push(f);
        trace.multipliers.push(mu);
        trace.iterations = used;
        if change < settings.mm_rel_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((w, trace))
}

fn rel_change(f: f64, f_new: f64) -> f64 {
    (f - f_new).abs() / f.abs().max(f64::MIN_POSITIVE)
}

/// Robust MSE beamforming.
pub fn algorithm1(problem: &BeamformingProblem, w0: Option<CMat>, settings: &SolverSettings) -> Result<(CMat, MMTrace)> {
    run_mm(problem, Criterion::Mse, w0, settings)
}

/// Robust MI beamforming; the trace records the negated objective.
pub fn algorithm1_mi(problem: &BeamformingProblem, w0: Option<CMat>, settings: &SolverSettings) -> Result<(CMat, MMTrace)> {
    run_mm(problem, Criterion::MutualInformation, w0, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exponential_correlation, lmmse_channel_estimate, TrialRng};
    use crate::numerics::testing::random_matrix;
    use crate::training::solve_p1_ls;

    fn instance(seed: u64, omega1: f64) -> BeamformingProblem {
        let config = SystemConfig { p_ce: 8.0, p_dt: 4.0, omega1, ..Default::default() };
        let r_h = exponential_correlation(8, 0.5).unwrap();
        let r_g = CorrelationMatrix::identity(8);
        let training = solve_p1_ls(8, config.p_ce, 8).unwrap().signal;
        let mut rng = TrialRng::new(seed);
        let h = rng.channel(&r_h, 4);
        let y = &h * training.matrix() + rng.noise(4, 8, 1.0);
        let est = lmmse_channel_estimate(&y, &training, &r_h, 1.0).unwrap();
        BeamformingProblem::new(est.h_hat, est.r_delta, &r_g, training.gram(), &config).unwrap()
    }

    #[test]
    fn extrapolation_keeps_descent_and_limit() {
        for seed in 0..6 {
            let p = instance(40 + seed, 0.2 * seed as f64);
            let fast = SolverSettings::default();
            let plain = SolverSettings { mm_accelerate: false, mm_max_iterations: 5000, mm_rel_tol: 1e-12, ..SolverSettings::default() };
            let (_, a) = algorithm1(&p, None, &fast).unwrap();
            let (_, b) = algorithm1(&p, None, &plain).unwrap();
            assert!(a.objectives.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(a.iterations <= fast.mm_max_iterations && a.converged);
            let (fa, fb) = (*a.objectives.last().unwrap(), *b.objectives.last().unwrap());
            assert!((fa - fb).abs() < 1e-5 * fb, "{fa} vs {fb}");
        }
    }

    #[test]
    fn zero_linear_term_gives_zero_beamformer() {
        let a = HermitianMatrix::identity(3);
        let (w, mu) = solve_regularized(&a, &CMat::zeros(3, 2), 1.0, 1e-13).unwrap();
        assert!(w.norm() == 0.0 && mu == 0.0);
    }

    #[test]
    fn scalar_power_equation() {
        let a = HermitianMatrix::identity(1);
        let pi = CMat::from_element(1, 1, C64::new(2.0, 0.0));
        let (w, mu) = solve_regularized(&a, &pi, 1.0, 1e-14).unwrap();
        assert!((mu - 1.0).abs() < 1e-12);
        assert!((w[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn active_budget_is_met() {
        for seed in 0..10 {
            let b = random_matrix(6, 6, seed);
            let a = HermitianMatrix::gram(&b).scale(0.01).add_identity(1e-3);
            let pi = random_matrix(6, 3, 50 + seed);
            let (w, mu) = solve_regularized(&a, &pi, 0.5, 1e-14).unwrap();
            assert!(mu > 0.0);
            assert!((power(&w) - 0.5).abs() < 1e-8 * 0.5);
        }
    }

    #[test]
    fn surrogate_is_tight_and_majorizes() {
        for criterion in [Criterion::Mse, Criterion::MutualInformation] {
            let p = instance(3, 0.5);
            let w0 = p.initial_beamformer().unwrap();
            let coeffs = surrogate_coefficients(&p, criterion, &w0).unwrap();
            let f0 = p.criterion_objective(criterion, &w0).unwrap();
            assert!((surrogate_value(&p, &coeffs, &w0) - f0).abs() < 1e-9);
            for k in 0..20 {
                let w = random_matrix(8, 4, 900 + k);
                let w = w.scale((p.p_dt / power(&w)).sqrt() * 0.9);
                let f = p.criterion_objective(criterion, &w).unwrap();
                assert!(surrogate_value(&p, &coeffs, &w) >= f - 1e-12);
            }
        }
    }

    #[test]
    fn compact_form_matches_expansion() {
        let p = instance(4, 0.3);
        let w0 = p.initial_beamformer().unwrap();
        let coeffs = surrogate_coefficients(&p, Criterion::Mse, &w0).unwrap();
        let compact = |w: &CMat| real_inner(w, &(coeffs.a.matrix() * w)) - 2.0 * real_inner(&coeffs.pi, w);
        let offset = surrogate_value(&p, &coeffs, &w0) - compact(&w0);
        for k in 0..5 {
            let w = random_matrix(8, 4, 40 + k);
            assert!((surrogate_value(&p, &coeffs, &w) - compact(&w) - offset).abs() < 1e-10);
        }
    }

    #[test]
    fn descent_and_convergence() {
        let p = instance(5, 0.5);
        let (w, trace) = algorithm1(&p, None, &SolverSettings::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.objectives.windows(2).all(|v| v[1] <= v[0] + 1e-12));
        assert!(power(&w) <= p.p_dt * (1.0 + 1e-9));
    }

    #[test]
    fn mi_descent() {
        let p = instance(6, 0.5);
        let (_, trace) = algorithm1_mi(&p, None, &SolverSettings::default()).unwrap();
        assert!(trace.objectives.windows(2).all(|v| v[1] <= v[0] + 1e-12));
        assert!(trace.converged);
    }
}
