use super::config::ExperimentConfig;
use super::csv::sweep_csv;
use super::runner::{run_scheme_with, run_sweep};
use crate::beamforming::{algorithm1, BeamformingProblem};
use crate::design::Scheme;
use crate::error::Result;
use crate::joint::{algorithm2, algorithm3};
use crate::model::{exponential_correlation, TrialRng};
use crate::training::{solve_p1, solve_p1_structured};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// A quick invariant suite on the configured system.
pub fn selftest(exp: &ExperimentConfig) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let point = exp.points()[0];
    let config = exp.system_at(&point);

    let trials = 2000;
    let run = run_scheme_with(exp, Scheme::Sequential, &point, trials)?;
    let emp = run.design.empirical.as_ref().expect("runner fills the empirical report");
    let tol = 3.0 / (trials as f64).sqrt() + 0.02;
    let ce = (emp.mse_ce.unwrap() / run.design.analytic.mse_ce.unwrap() - 1.0).abs();
    let rad = (emp.mse_rad_exact.unwrap() / run.design.analytic.mse_rad_exact.unwrap() - 1.0).abs();
    out.push(check("estimator_consistency", ce < tol && rad < tol, format!("channel {ce:.2e}, target {rad:.2e}, tolerance {tol:.2e}")));

    let training = solve_p1(&exp.r_h, &exp.r_g, config.sigma2, config.p_ce, config.l_ce, config.omega1, &exp.settings)?;
    let mut worst_rise = 0.0f64;
    for seed in 0..5 {
        let mut rng = TrialRng::new(seed);
        let h = rng.gaussian_matrix(config.n_com, config.m);
        let r_delta = crate::model::error_covariance(&exp.r_h, &training.r_x, config.sigma2)?;
        let problem = BeamformingProblem::new(h, r_delta, &exp.r_g, &training.r_x, &config)?;
        let (_, trace) = algorithm1(&problem, None, &exp.settings)?;
        for w in trace.objectives.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    out.push(check("beamforming_descent", worst_rise <= 1e-12, format!("largest increase {worst_rise:.2e}")));

    let aligned = exp.r_g.matrix().commutator_defect(exp.r_h.matrix()) < exp.settings.alignment_tol;
    if aligned {
        let (_, structured) = solve_p1_structured(&exp.r_h, &exp.r_g, config.sigma2, config.p_ce, config.l_ce, config.omega1, &exp.settings)?;
        let gap = (training.objective - structured.objective).abs() / structured.objective;
        out.push(check("structured_training", gap < 1e-5, format!("relative gap {gap:.2e}")));

        let f2 = algorithm2(&exp.r_h, &exp.r_g, &config, None, &exp.settings)?.0.objective;
        let f3 = algorithm3(&exp.r_h, &exp.r_g, &config, &exp.settings)?.0.objective;
        let gap = (f2 - f3).abs() / f2.min(f3);
        out.push(check("joint_algorithms_agree", gap < 1e-2, format!("relative gap {gap:.2e}")));
    } else {
        let r = exponential_correlation(config.m, exp.rho)?;
        let (_, structured) = solve_p1_structured(&r, &r, config.sigma2, config.p_ce, config.l_ce, config.omega1, &exp.settings)?;
        let general = solve_p1(&r, &r, config.sigma2, config.p_ce, config.l_ce, config.omega1, &exp.settings)?;
        let gap = (general.objective - structured.objective).abs() / structured.objective;
        out.push(check("structured_training", gap < 1e-5, format!("relative gap {gap:.2e} (R_G = R_H)")));
    }

    let mut small = exp.clone();
    small.trials = 20;
    small.gamma_dt_db.truncate(1);
    small.omega1_grid.truncate(1);
    let a = sweep_csv(&run_sweep(&small)?);
    let b = sweep_csv(&run_sweep(&small)?);
    out.push(check("deterministic_output", a == b, format!("{} bytes", a.len())));
    Ok(out)
}
