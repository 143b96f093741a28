//! Browser bindings for three small views of the designs: the training power
//! allocation, the statistical trade-off curve and the symbol-average gap.

use wasm_bindgen::prelude::*;

use isac_core::experiments::db_to_linear;
use isac_core::joint::algorithm2;
use isac_core::metrics::{mse_rad_approx, mse_rad_exact};
use isac_core::model::{exponential_correlation, CorrelationMatrix, SystemConfig, TrainingSignal, TrialRng};
use isac_core::training::solve_p1_structured;
use isac_core::SolverSettings;

fn system(gamma_ce_db: f64, gamma_dt_db: f64, omega1: f64) -> SystemConfig {
    let base = SystemConfig::default();
    SystemConfig {
        p_ce: db_to_linear(gamma_ce_db) * base.l_ce as f64 * base.sigma2,
        p_dt: db_to_linear(gamma_dt_db) * base.sigma2,
        omega1,
        ..base
    }
}

fn correlations(m: usize, rho: f64) -> Result<(CorrelationMatrix, CorrelationMatrix), String> {
    if !(0.0..1.0).contains(&rho) {
        return Err(format!("rho = {rho} must lie in [0, 1)"));
    }
    let r_h = exponential_correlation(m, rho).map_err(|e| e.to_string())?;
    Ok((r_h, CorrelationMatrix::identity(m)))
}

/// Training power per eigendirection of `R_H`, strongest first.
pub fn training_powers(rho: f64, gamma_ce_db: f64, omega1: f64) -> Result<Vec<f64>, String> {
    let c = system(gamma_ce_db, 0.0, omega1);
    let (r_h, r_g) = correlations(c.m, rho)?;
    let (alloc, _) = solve_p1_structured(&r_h, &r_g, c.sigma2, c.p_ce, c.l_ce, omega1, &SolverSettings::default())
        .map_err(|e| e.to_string())?;
    Ok(alloc.x)
}

/// `(mse_com_avg, mse_rad)` pairs of the statistical design for `points` weights in `[0, 1]`, flattened.
pub fn tradeoff_curve(rho: f64, gamma_db: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least two weights".into());
    }
    let settings = SolverSettings::default();
    let mut out = Vec::with_capacity(2 * points);
    for i in 0..points {
        let w = i as f64 / (points - 1) as f64;
        let c = system(gamma_db, gamma_db, w);
        let (r_h, r_g) = correlations(c.m, rho)?;
        let (design, _) = algorithm2(&r_h, &r_g, &c, None, &settings).map_err(|e| e.to_string())?;
        out.push(design.analytic.mse_com_avg.unwrap_or(f64::NAN));
        out.push(design.analytic.mse_rad_approx.unwrap_or(f64::NAN));
    }
    Ok(out)
}

/// Mean exact target MSE over `draws` QPSK blocks of length `l_dt`, then the
/// approximation, for the balanced statistical design.
pub fn approximation_gap(l_dt: usize, gamma_dt_db: f64, draws: usize, seed: u64) -> Result<Vec<f64>, String> {
    if l_dt == 0 || draws == 0 {
        return Err("data length and draw count must be positive".into());
    }
    let base = system(1.0, gamma_dt_db, 0.5);
    let c = SystemConfig { l_dt, l: base.l_ce + l_dt, ..base };
    let (r_h, r_g) = correlations(c.m, 0.5)?;
    let (design, _) = algorithm2(&r_h, &r_g, &c, None, &SolverSettings::default()).map_err(|e| e.to_string())?;
    let training = TrainingSignal::new(design.x.clone(), c.p_ce * (1.0 + 1e-9)).map_err(|e| e.to_string())?;
    let mut exact = 0.0;
    for t in 0..draws {
        let s = TrialRng::for_trial(seed, t as u64).qpsk(c.d, l_dt);
        exact += mse_rad_exact(&r_g, training.gram(), &design.w, &s, c.sigma2).map_err(|e| e.to_string())?;
    }
    let approx = mse_rad_approx(&r_g, training.gram(), &design.w, l_dt, c.sigma2).map_err(|e| e.to_string())?;
    Ok(vec![exact / draws as f64, approx])
}

#[wasm_bindgen(js_name = trainingPowers)]
pub fn training_powers_js(rho: f64, gamma_ce_db: f64, omega1: f64) -> Result<Vec<f64>, JsError> {
    training_powers(rho, gamma_ce_db, omega1).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = tradeoffCurve)]
pub fn tradeoff_curve_js(rho: f64, gamma_db: f64, points: usize) -> Result<Vec<f64>, JsError> {
    tradeoff_curve(rho, gamma_db, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = approximationGap)]
pub fn approximation_gap_js(l_dt: usize, gamma_dt_db: f64, draws: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    approximation_gap(l_dt, gamma_dt_db, draws, seed).map_err(|e| JsError::new(&e))
}
