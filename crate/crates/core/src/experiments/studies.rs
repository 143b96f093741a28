use super::config::{ExperimentConfig, SweepPoint};
use super::runner::{run_scheme, scheme_trials, SchemeRun};
use crate::design::{DesignResult, Scheme};
use crate::error::{IsacError, Result};
use crate::joint::{algorithm2, algorithm3, TracePoint};

/// Points where one family of schemes trades data MSE for target MSE.
#[derive(Clone, Debug)]
pub struct RegionBoundary {
    pub scheme: Scheme,
    pub runs: Vec<SchemeRun>,
}

impl RegionBoundary {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.runs.iter().map(|r| (r.mse_com, r.mse_rad)).collect()
    }

    /// Sorting by `mse_com` gives nonincreasing `mse_rad`, up to `rel_tol`.
    pub fn is_pareto_monotone(&self, rel_tol: f64) -> bool {
        let mut p = self.pairs();
        p.sort_by(|a, b| a.0.total_cmp(&b.0));
        p.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + rel_tol))
    }

    pub fn min_mse_com(&self) -> f64 {
        self.runs.iter().map(|r| r.mse_com).fold(f64::INFINITY, f64::min)
    }

    pub fn min_mse_rad(&self) -> f64 {
        self.runs.iter().map(|r| r.mse_rad).fold(f64::INFINITY, f64::min)
    }
}

/// Per-block and statistical boundaries over `omega_grid` at the first SNR pair.
pub fn mse_region_sweep(exp: &ExperimentConfig, omega_grid: &[f64]) -> Result<Vec<RegionBoundary>> {
    if omega_grid.is_empty() || omega_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(IsacError::Config("omega grid must be nonempty and inside [0, 1]".into()));
    }
    let base = exp.points()[0];
    [Scheme::Sequential, Scheme::Joint]
        .into_iter()
        .map(|scheme| {
            let runs = omega_grid
                .iter()
                .map(|&w| run_scheme(exp, scheme, &SweepPoint { omega1: w, ..base }))
                .collect::<Result<Vec<_>>>()?;
            Ok(RegionBoundary { scheme, runs })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxRow {
    pub l_dt: usize,
    pub mse_rad_exact: f64,
    pub mse_rad_approx: f64,
    /// `(exact − approx) / approx`.
    pub rel_gap: f64,
    pub trials: usize,
}

/// Exact target MSE over QPSK symbol draws against the `SSᴴ ≈ L_DT·I` form,
/// for the per-block design at `point` and each data length in the grid.
pub fn approximation_study(exp: &ExperimentConfig, point: &SweepPoint) -> Result<Vec<ApproxRow>> {
    exp.l_dt_grid
        .iter()
        .map(|&l_dt| {
            let mut e = exp.clone();
            e.system.l_dt = l_dt;
            e.system.l = e.system.l_ce + l_dt;
            let (_, outcomes) = scheme_trials(&e, Scheme::Sequential, point, exp.trials)?;
            let n = outcomes.len() as f64;
            let exact = outcomes.iter().map(|o| o.mse_rad_exact).sum::<f64>() / n;
            let approx = outcomes.iter().map(|o| o.mse_rad_approx).sum::<f64>() / n;
            Ok(ApproxRow { l_dt, mse_rad_exact: exact, mse_rad_approx: approx, rel_gap: (exact - approx) / approx, trials: outcomes.len() })
        })
        .collect()
}

/// Is the gap column strictly decreasing along the grid?
pub fn gap_decreasing(rows: &[ApproxRow]) -> bool {
    rows.windows(2).all(|w| w[1].rel_gap < w[0].rel_gap)
}

/// Final designs and objective histories of the two statistical algorithms.
#[derive(Clone, Debug)]
pub struct AlgorithmComparison {
    pub alternating: DesignResult,
    pub alternating_trace: Vec<TracePoint>,
    pub power_allocation: DesignResult,
    pub power_allocation_trace: Vec<TracePoint>,
}

impl AlgorithmComparison {
    pub fn relative_difference(&self) -> f64 {
        let (a, b) = (self.alternating.objective, self.power_allocation.objective);
        (a - b).abs() / a.abs().min(b.abs())
    }
}

pub fn algorithm_comparison(exp: &ExperimentConfig, point: &SweepPoint) -> Result<AlgorithmComparison> {
    let config = exp.system_at(point);
    let (alternating, trace2) = algorithm2(&exp.r_h, &exp.r_g, &config, None, &exp.settings).map_err(|e| e.context("joint"))?;
    let (power_allocation, _, trace3) = algorithm3(&exp.r_h, &exp.r_g, &config, &exp.settings).map_err(|e| e.context("joint_gp"))?;
    Ok(AlgorithmComparison {
        alternating,
        alternating_trace: trace2.points(),
        power_allocation,
        power_allocation_trace: trace3.points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{mse_rad_approx, mse_rad_exact};
    use crate::numerics::testing::random_matrix;
    use crate::numerics::{CMat, HermitianMatrix, C64};

    #[test]
    fn weight_endpoints_match_oriented_designs() {
        let exp = ExperimentConfig { trials: 50, ..ExperimentConfig::default() };
        let b = mse_region_sweep(&exp, &[0.0, 1.0]).unwrap();
        let base = exp.points()[0];
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs();
        let seq = run_scheme(&exp, Scheme::CommSequential, &SweepPoint { omega1: 1.0, ..base }).unwrap();
        assert!(close(b[0].runs[1].mse_com, seq.mse_com) && close(b[0].runs[1].mse_rad, seq.mse_rad));
        let comm = run_scheme(&exp, Scheme::CommJoint, &base).unwrap();
        assert!(close(b[1].runs[1].design.objective, comm.design.objective));
        let sensing = run_scheme(&exp, Scheme::Sensing, &base).unwrap();
        assert!(close(b[1].runs[0].design.objective, sensing.design.objective));
    }

    #[test]
    fn orthogonal_symbols_close_the_gap() {
        let (m, d, l) = (8, 4, 32);
        let r_g = crate::model::exponential_correlation(m, 0.4).unwrap();
        let gram = HermitianMatrix::gram(&random_matrix(m, m, 3));
        let w = random_matrix(m, d, 4);
        let s = CMat::from_fn(d, l, |i, j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i * j) as f64 / l as f64));
        let exact = mse_rad_exact(&r_g, &gram, &w, &s, 1.0).unwrap();
        let approx = mse_rad_approx(&r_g, &gram, &w, l, 1.0).unwrap();
        assert!((exact - approx).abs() < 1e-12 * approx);
    }
}
