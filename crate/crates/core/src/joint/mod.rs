//! Joint training and transmission design from channel statistics only.
//!
//! The transmitter knows `R_H` and `R_G`, not the channel estimate, so the
//! data MSE is replaced by its average [`mse_com_avg`]. [`algorithm2`]
//! alternates between the training covariance and the beamformer;
//! [`algorithm3`] solves the power-allocation form for aligned correlations.

mod gp;

pub use gp::{algorithm3, power_allocation_objective, PowerAllocationState, ScaTrace};

use web_time::Instant;

use crate::beamforming::{run_mm, BeamformingProblem, Criterion};
use crate::design::{DesignResult, Scheme};
use crate::error::{IsacError, Result};
use crate::metrics::{mi_ce, mi_com_avg, mi_rad, mse_ce, mse_com_avg, mse_rad_approx, MetricReport};
use crate::model::{error_covariance, CorrelationMatrix, SystemConfig};
use crate::numerics::{is_cancelled, pgd_minimize, power, CMat, HermitianMatrix};
use crate::settings::SolverSettings;
use crate::training::{hermitian_projector, recover_training, TrainingDesign, TrainingMethod};

/// Objective value at one point of a solver history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub wallclock_ms: f64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct AOIterate {
    pub x: CMat,
    pub w: CMat,
    pub objective: f64,
    pub wallclock_ms: f64,
}

/// History of the alternating design, starting with the initial point.
#[derive(Clone, Debug, Default)]
pub struct AOTrace {
    pub iterates: Vec<AOIterate>,
    pub converged: bool,
}

impl AOTrace {
    pub fn points(&self) -> Vec<TracePoint> {
        self.iterates
            .iter()
            .enumerate()
            .map(|(i, it)| TracePoint { iteration: i, wallclock_ms: it.wallclock_ms, objective: it.objective })
            .collect()
    }
}

fn statistics(r_h: &CorrelationMatrix, r_x: &HermitianMatrix, sigma2: f64) -> Result<(HermitianMatrix, HermitianMatrix)> {
    let r_delta = error_covariance(r_h, r_x, sigma2)?;
    let r_hhat = r_h.matrix().sub(&r_delta);
    Ok((r_delta, r_hhat))
}

/// Weighted average data MSE plus target MSE for training covariance `R_X`.
pub fn joint_objective(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    r_x: &HermitianMatrix,
    w: &CMat,
    config: &SystemConfig,
) -> Result<f64> {
    let mut f = 0.0;
    if config.omega1 > 0.0 {
        let (r_delta, r_hhat) = statistics(r_h, r_x, config.sigma2)?;
        f += config.omega1 * mse_com_avg(&r_hhat, w, &r_delta, config.sigma2, config.n_com)?;
    }
    if config.omega2() > 0.0 {
        f += config.omega2() * mse_rad_approx(r_g, r_x, w, config.l_dt, config.sigma2)?;
    }
    Ok(f)
}

/// Gradient of [`joint_objective`] with respect to `R_X` for fixed `W`.
pub fn joint_gradient(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    r_x: &HermitianMatrix,
    w: &CMat,
    config: &SystemConfig,
) -> Result<CMat> {
    let m = r_x.dim();
    let d = w.ncols() as f64;
    let sigma2 = config.sigma2;
    let mut g = CMat::zeros(m, m);
    if config.omega1 > 0.0 {
        let (r_delta, r_hhat) = statistics(r_h, r_x, sigma2)?;
        let n = config.n_com as f64;
        let kappa = crate::metrics::effective_noise(w, &r_delta, sigma2);
        let whrw = HermitianMatrix::from_raw(w.adjoint() * r_hhat.matrix() * w);
        let t_inv2 = whrw.scale(n / kappa).add_identity(1.0).evd()?.map(|l| l.powi(-2));
        let tau = crate::numerics::real_inner(t_inv2.matrix(), whrw.matrix());
        // Derivative of Tr T⁻¹ with respect to R_Δ.
        let g_delta = (w * t_inv2.matrix() * w.adjoint()).scale(n / kappa) + (w * w.adjoint()).scale(n * tau / (kappa * kappa));
        g -= (r_delta.matrix() * g_delta * r_delta.matrix()).scale(config.omega1 / (d * sigma2));
    }
    if config.omega2() > 0.0 {
        let info = crate::metrics::sensing_information(r_g, &crate::metrics::approximate_energy(r_x, w, config.l_dt), sigma2)?;
        let inv2 = info.evd()?.map(|l| l.powi(-2));
        g -= inv2.matrix().scale(config.omega2() / (m as f64 * sigma2));
    }
    Ok(g)
}

/// Training covariance minimizing [`joint_objective`] with `W` held fixed.
///
/// Projected gradient from `start` (or `P_CE/M · I`); only a stationary point
/// is guaranteed since the subproblem is not convex.
pub fn solve_x_subproblem(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    w: &CMat,
    config: &SystemConfig,
    start: Option<&HermitianMatrix>,
    settings: &SolverSettings,
) -> Result<TrainingDesign> {
    let m = r_h.dim();
    let start = match start {
        Some(s) => s.matrix().clone(),
        None => CMat::identity(m, m).scale(config.p_ce / m as f64),
    };
    let out = pgd_minimize(
        |x: &CMat| joint_objective(r_h, r_g, &HermitianMatrix::from_raw(x.clone()), w, config),
        |x: &CMat| joint_gradient(r_h, r_g, &HermitianMatrix::from_raw(x.clone()), w, config),
        hermitian_projector(config.p_ce),
        start,
        &settings.pgd,
        &settings.cancel,
    )
    .map_err(|e| e.context("training subproblem"))?;
    let r_x = HermitianMatrix::from_raw(out.x);
    Ok(TrainingDesign {
        signal: recover_training(&r_x, config.l_ce, config.p_ce)?,
        r_x,
        objective: out.objective,
        method: TrainingMethod::ProjectedGradient,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// `√N_com · R_Ĥ^{1/2}`, whose Gram matrix is the mean estimate Gram.
pub fn equivalent_channel(r_hhat: &HermitianMatrix, n_com: usize) -> Result<CMat> {
    Ok(r_hhat.sqrt_psd()?.matrix().scale((n_com as f64).sqrt()))
}

/// Beamforming problem seen by the transmitter for training covariance `R_X`.
pub fn statistical_beamforming_problem(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    r_x: &HermitianMatrix,
    config: &SystemConfig,
) -> Result<BeamformingProblem> {
    let (r_delta, r_hhat) = statistics(r_h, r_x, config.sigma2)?;
    let h = equivalent_channel(&r_hhat, config.n_com)?;
    BeamformingProblem::new(h, r_delta, r_g, r_x, config)
}

/// Top-`D` eigenvectors of `R_H` at full power.
pub fn default_joint_beamformer(r_h: &CorrelationMatrix, config: &SystemConfig) -> CMat {
    r_h.evd().basis.columns(0, config.d).scale((config.p_dt / config.d as f64).sqrt())
}

/// Analytic metrics of a statistical design with training covariance `R_X`.
pub fn statistical_report(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    r_x: &HermitianMatrix,
    w: &CMat,
    config: &SystemConfig,
) -> Result<MetricReport> {
    let sigma2 = config.sigma2;
    let (r_delta, r_hhat) = statistics(r_h, r_x, sigma2)?;
    Ok(MetricReport {
        mse_ce: Some(mse_ce(r_h, r_x, sigma2)? / r_h.dim() as f64),
        mse_com_avg: Some(mse_com_avg(&r_hhat, w, &r_delta, sigma2, config.n_com)?),
        mse_rad_approx: Some(mse_rad_approx(r_g, r_x, w, config.l_dt, sigma2)?),
        mi_ce: Some(mi_ce(r_h, r_x, sigma2)?),
        mi_com_avg: Some(mi_com_avg(&r_hhat, w, &r_delta, sigma2, config.n_com)?),
        mi_rad: Some(mi_rad(r_g, r_x, w, config.l_dt, sigma2)?),
        ..Default::default()
    })
}

/// Alternating optimization of training and beamformer.
///
/// Each outer step solves the training subproblem warm-started at the current
/// covariance, then runs the beamforming loop on the equivalent channel from
/// the current beamformer. A block update that would raise the objective is
/// discarded, so the recorded objective never increases.
pub fn algorithm2(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    config: &SystemConfig,
    w0: Option<CMat>,
    settings: &SolverSettings,
) -> Result<(DesignResult, AOTrace)> {
    config.validate()?;
    let clock = Instant::now();
    let mut w = w0.unwrap_or_else(|| default_joint_beamformer(r_h, config));
    if power(&w) > config.p_dt * (1.0 + 1e-9) {
        return Err(IsacError::invalid("initial beamformer exceeds the power budget"));
    }
    let m = r_h.dim();
    let mut r_x = HermitianMatrix::identity(m).scale(config.p_ce / m as f64);
    let mut f = joint_objective(r_h, r_g, &r_x, &w, config)?;
    let mut trace = AOTrace::default();
    let record = |trace: &mut AOTrace, r_x: &HermitianMatrix, w: &CMat, f: f64| -> Result<()> {
        trace.iterates.push(AOIterate {
            x: recover_training(r_x, config.l_ce, config.p_ce)?.matrix().clone(),
            w: w.clone(),
            objective: f,
            wallclock_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    };
    record(&mut trace, &r_x, &w, f)?;
    let mut iterations = 0;
    for it in 0..settings.ao_max_iterations {
        if is_cancelled(&settings.cancel) {
            return Err(IsacError::Cancelled { iterations: it });
        }
        let f_start = f;
        let training = solve_x_subproblem(r_h, r_g, &w, config, Some(&r_x), settings)?;
        let f_x = joint_objective(r_h, r_g, &training.r_x, &w, config)?;
        if f_x <= f {
            r_x = training.r_x;
            f = f_x;
        }
        let problem = statistical_beamforming_problem(r_h, r_g, &r_x, config)?;
        let (w_new, _) = run_mm(&problem, Criterion::Mse, Some(w.clone()), settings).map_err(|e| e.context("beamforming subproblem"))?;
        let f_w = joint_objective(r_h, r_g, &r_x, &w_new, config)?;
        if f_w <= f {
            w = w_new;
            f = f_w;
        }
        iterations = it + 1;
        record(&mut trace, &r_x, &w, f)?;
        if (f_start - f).abs() / f_start.abs().max(f64::MIN_POSITIVE) < settings.ao_rel_tol {
            trace.converged = true;
            break;
        }
    }
    let signal = recover_training(&r_x, config.l_ce, config.p_ce)?;
    let analytic = statistical_report(r_h, r_g, &r_x, &w, config)?;
    let design = DesignResult {
        scheme: Scheme::Joint,
        x: signal.matrix().clone(),
        w,
        objective: f,
        analytic,
        empirical: None,
        wallclock_ms: clock.elapsed().as_secs_f64() * 1e3,
        converged: trace.converged,
        iterations,
    };
    Ok((design, trace))
}

/// Joint design with the sensing weight removed.
pub fn communication_oriented(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    config: &SystemConfig,
    settings: &SolverSettings,
) -> Result<DesignResult> {
    let (mut design, _) = algorithm2(r_h, r_g, &config.with_omega1(1.0), None, settings)?;
    design.scheme = Scheme::CommJoint;
    Ok(design)
}

/// `Tr{(R_G⁻¹ + (R_X + L_DT WWᴴ)/σ²)⁻¹} / M`.
fn sensing_objective(r_g: &CorrelationMatrix, pair: &(CMat, CMat), config: &SystemConfig) -> Result<f64> {
    mse_rad_approx(r_g, &HermitianMatrix::from_raw(pair.0.clone()), &pair.1, config.l_dt, config.sigma2)
}

fn sensing_gradient(r_g: &CorrelationMatrix, pair: &(CMat, CMat), config: &SystemConfig) -> Result<(CMat, CMat)> {
    let (r_x, w) = pair;
    let m = r_g.dim() as f64;
    let energy = crate::metrics::approximate_energy(&HermitianMatrix::from_raw(r_x.clone()), w, config.l_dt);
    let inv2 = crate::metrics::sensing_information(r_g, &energy, config.sigma2)?.evd()?.map(|l| l.powi(-2));
    let scale = 1.0 / (m * config.sigma2);
    let g_x = inv2.matrix().scale(-scale);
    let g_w = (inv2.matrix() * w).scale(-2.0 * config.l_dt as f64 * scale);
    Ok((g_x, g_w))
}

/// Training and beamformer minimizing the target estimation MSE alone.
///
/// Projected gradient over the pair `(R_X, W)`; the training covariance is
/// projected onto its trace budget and `W` is scaled back into its ball.
pub fn sensing_oriented(r_g: &CorrelationMatrix, r_h: &CorrelationMatrix, config: &SystemConfig, settings: &SolverSettings) -> Result<DesignResult> {
    config.validate()?;
    let clock = Instant::now();
    let m = r_g.dim();
    let start_w = r_g.evd().basis.columns(0, config.d).scale((config.p_dt / config.d as f64).sqrt());
    let start = (CMat::identity(m, m).scale(config.p_ce / m as f64), start_w);
    let project_x = hermitian_projector(config.p_ce);
    let p_dt = config.p_dt;
    let out = pgd_minimize(
        |p: &(CMat, CMat)| sensing_objective(r_g, p, config),
        |p: &(CMat, CMat)| sensing_gradient(r_g, p, config),
        |p: &(CMat, CMat)| {
            let norm2 = power(&p.1);
            let w = if norm2 > p_dt { p.1.scale((p_dt / norm2).sqrt()) } else { p.1.clone() };
            Ok((project_x(&p.0)?, w))
        },
        start,
        &settings.pgd,
        &settings.cancel,
    )
    .map_err(|e| e.context("sensing-oriented design"))?;
    let (r_x, w) = out.x;
    let r_x = HermitianMatrix::from_raw(r_x);
    let signal = recover_training(&r_x, config.l_ce, config.p_ce)?;
    let analytic = statistical_report(r_h, r_g, &r_x, &w, config)?;
    Ok(DesignResult {
        scheme: Scheme::Sensing,
        x: signal.matrix().clone(),
        w,
        objective: out.objective,
        analytic,
        empirical: None,
        wallclock_ms: clock.elapsed().as_secs_f64() * 1e3,
        converged: out.converged,
        iterations: out.iterations,
    })
}
