use web_time::Instant;

use super::config::{ExperimentConfig, SweepPoint};
use crate::beamforming::{algorithm1, BeamformingProblem};
use crate::design::{DesignResult, Scheme};
use crate::error::{IsacError, Result};
use crate::joint::{algorithm2, algorithm3, communication_oriented, sensing_oriented};
use crate::metrics::{mi_com, mi_rad, mse_com, mse_rad_approx, mse_rad_exact, MetricReport};
use crate::model::{full_block, lmmse_channel_estimate, lmmse_trm_estimate, SystemConfig, TrainingSignal, TrialRng};
use crate::numerics::{joint_eigenbasis, CMat};
use crate::training::solve_p1;

/// Analytic and empirical quantities of one Monte Carlo trial.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrialOutcome {
    pub mse_com: f64,
    pub mi_com: f64,
    pub mse_rad_approx: f64,
    pub mse_rad_exact: f64,
    pub mi_rad: f64,
    /// Design objective for per-block schemes; zero otherwise.
    pub objective: f64,
    /// `‖H − Ĥ‖² / (N_com M)`.
    pub channel_error: f64,
    /// `‖G − Ĝ‖² / (N_rad M)`.
    pub target_error: f64,
    pub converged: bool,
}

/// One scheme evaluated at one sweep point.
#[derive(Clone, Debug)]
pub struct SchemeRun {
    pub point: SweepPoint,
    pub trials: usize,
    pub design: DesignResult,
    /// Trial means of the per-trial analytic data MSE and MI.
    pub mse_com: f64,
    pub mi_com: f64,
    pub mse_rad: f64,
    pub mi_rad: f64,
}

enum Transmit<'a> {
    Fixed(&'a CMat),
    /// Beamformer redesigned on every channel estimate with these parameters.
    PerBlock(SystemConfig),
}

pub(crate) fn map_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(f).collect()
    }
}

fn frobenius2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

fn run_trial(
    exp: &ExperimentConfig,
    config: &SystemConfig,
    training: &TrainingSignal,
    transmit: &Transmit<'_>,
    index: usize,
) -> Result<TrialOutcome> {
    let s2 = config.sigma2;
    let m = config.m as f64;
    let mut rng = TrialRng::for_trial(exp.seed, index as u64);
    let h = rng.channel(&exp.r_h, config.n_com);
    let noise = rng.noise(config.n_com, config.l_ce, s2);
    let g = rng.channel(&exp.r_g, config.n_rad);
    let s = rng.qpsk(config.d, config.l_dt);

    let y = &h * training.matrix() + noise;
    let est = lmmse_channel_estimate(&y, training, &exp.r_h, s2)?;
    let (w, objective, converged) = match transmit {
        Transmit::Fixed(w) => ((*w).clone(), 0.0, true),
        Transmit::PerBlock(bf) => {
            let problem = BeamformingProblem::new(est.h_hat.clone(), est.r_delta.clone(), &exp.r_g, training.gram(), bf)?;
            let (w, trace) = algorithm1(&problem, None, &exp.settings)?;
            let f = *trace.objectives.last().expect("trace holds the initial objective");
            (w, f, trace.converged)
        }
    };
    let p = full_block(training.matrix(), &w, &s);
    let y_rad = &g * &p + rng.noise(config.n_rad, p.ncols(), s2);
    let g_hat = lmmse_trm_estimate(&y_rad, &p, &exp.r_g, s2)?;

    let gram = training.gram();
    Ok(TrialOutcome {
        mse_com: mse_com(&est.h_hat, &w, &est.r_delta, s2)?,
        mi_com: mi_com(&est.h_hat, &w, &est.r_delta, s2)?,
        mse_rad_approx: mse_rad_approx(&exp.r_g, gram, &w, config.l_dt, s2)?,
        mse_rad_exact: mse_rad_exact(&exp.r_g, gram, &w, &s, s2)?,
        mi_rad: mi_rad(&exp.r_g, gram, &w, config.l_dt, s2)?,
        objective,
        channel_error: frobenius2(&(&h - &est.h_hat)) / (config.n_com as f64 * m),
        target_error: frobenius2(&(&g - &g_hat)) / (config.n_rad as f64 * m),
        converged,
    })
}

/// Means in trial-index order, so the result does not depend on scheduling.
fn mean(outcomes: &[TrialOutcome], f: impl Fn(&TrialOutcome) -> f64) -> f64 {
    outcomes.iter().map(f).sum::<f64>() / outcomes.len() as f64
}

/// Per-trial outcomes of a fixed training and transmit strategy.
fn monte_carlo(
    exp: &ExperimentConfig,
    config: &SystemConfig,
    training: &TrainingSignal,
    transmit: &Transmit<'_>,
    trials: usize,
) -> Result<Vec<TrialOutcome>> {
    map_trials(trials, |t| run_trial(exp, config, training, transmit, t))
}

/// Monte Carlo outcomes of the design that `run_scheme` would produce.
pub fn scheme_trials(exp: &ExperimentConfig, scheme: Scheme, point: &SweepPoint, trials: usize) -> Result<(DesignResult, Vec<TrialOutcome>)> {
    let config = exp.system_at(point);
    let context = scheme.tag();
    let inner = || -> Result<(DesignResult, Vec<TrialOutcome>)> {
        let clock = Instant::now();
        if scheme.is_instantaneous() {
            let (train_w, bf) = match scheme {
                Scheme::Sequential => (config.omega1, config.clone()),
                Scheme::Existing => (1.0, config.clone()),
                _ => (1.0, config.with_omega1(1.0)),
            };
            let design = solve_p1(&exp.r_h, &exp.r_g, config.sigma2, config.p_ce, config.l_ce, train_w, &exp.settings)?;
            let outcomes = monte_carlo(exp, &config, &design.signal, &Transmit::PerBlock(bf), trials)?;
            let result = DesignResult {
                scheme,
                x: design.signal.matrix().clone(),
                w: CMat::zeros(config.m, config.d),
                objective: mean(&outcomes, |o| o.objective),
                analytic: MetricReport::default(),
                empirical: None,
                wallclock_ms: clock.elapsed().as_secs_f64() * 1e3,
                converged: design.converged && outcomes.iter().all(|o| o.converged),
                iterations: design.iterations,
            };
            return Ok((result, outcomes));
        }
        let mut design = match scheme {
            Scheme::Joint if exp.structured && joint_eigenbasis(exp.r_h.matrix(), exp.r_g.matrix(), exp.settings.alignment_tol).is_ok() => {
                let mut d = algorithm3(&exp.r_h, &exp.r_g, &config, &exp.settings)?.0;
                d.scheme = Scheme::Joint;
                d
            }
            Scheme::Joint => algorithm2(&exp.r_h, &exp.r_g, &config, None, &exp.settings)?.0,
            Scheme::JointGp => algorithm3(&exp.r_h, &exp.r_g, &config, &exp.settings)?.0,
            Scheme::CommJoint => communication_oriented(&exp.r_h, &exp.r_g, &config, &exp.settings)?,
            Scheme::Sensing => sensing_oriented(&exp.r_g, &exp.r_h, &config, &exp.settings)?,
            _ => unreachable!("per-block schemes handled above"),
        };
        design.wallclock_ms = clock.elapsed().as_secs_f64() * 1e3;
        let training = TrainingSignal::new(design.x.clone(), config.p_ce * (1.0 + 1e-9))?;
        let outcomes = monte_carlo(exp, &config, &training, &Transmit::Fixed(&design.w), trials)?;
        Ok((design, outcomes))
    };
    inner().map_err(|e| e.context(context))
}

/// Runs the full pipeline of `scheme` at `point` with `exp.trials` trials.
pub fn run_scheme(exp: &ExperimentConfig, scheme: Scheme, point: &SweepPoint) -> Result<SchemeRun> {
    run_scheme_with(exp, scheme, point, exp.trials)
}

pub fn run_scheme_with(exp: &ExperimentConfig, scheme: Scheme, point: &SweepPoint, trials: usize) -> Result<SchemeRun> {
    if trials == 0 {
        return Err(IsacError::Config("trials must be at least 1".into()));
    }
    let config = exp.system_at(point);
    let (mut design, outcomes) = scheme_trials(exp, scheme, point, trials)?;
    let training = TrainingSignal::new(design.x.clone(), config.p_ce * (1.0 + 1e-9))?;
    let mse_ce = crate::metrics::mse_ce(&exp.r_h, training.gram(), config.sigma2)? / config.m as f64;
    let mse_com = mean(&outcomes, |o| o.mse_com);
    let mi_com = mean(&outcomes, |o| o.mi_com);
    let mse_rad = mean(&outcomes, |o| o.mse_rad_approx);
    let mi_rad = mean(&outcomes, |o| o.mi_rad);
    let a = &mut design.analytic;
    a.mse_ce = Some(mse_ce);
    a.mse_com = Some(mse_com);
    a.mi_com = Some(mi_com);
    a.mse_rad_exact = Some(mean(&outcomes, |o| o.mse_rad_exact));
    if scheme.is_instantaneous() {
        a.mse_rad_approx = Some(mse_rad);
        a.mi_rad = Some(mi_rad);
    }
    design.empirical = Some(MetricReport {
        mse_ce: Some(mean(&outcomes, |o| o.channel_error)),
        mse_rad_exact: Some(mean(&outcomes, |o| o.target_error)),
        ..Default::default()
    });
    if !exp.record_wallclock {
        design.wallclock_ms = 0.0;
    }
    Ok(SchemeRun { point: *point, trials, design, mse_com, mi_com, mse_rad, mi_rad })
}

/// Every configured scheme at every sweep point, points outer.
pub fn run_sweep(exp: &ExperimentConfig) -> Result<Vec<SchemeRun>> {
    let mut out = Vec::new();
    for point in exp.points() {
        for &scheme in &exp.schemes {
            out.push(run_scheme(exp, scheme, &point)?);
        }
    }
    Ok(out)
}
