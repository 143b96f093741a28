use serde::Deserialize;

use crate::numerics::{BarrierSettings, CancelToken, PgdSettings};

/// Iteration limits and tolerances of the iterative designs.
#[derive(Clone, Debug)]
pub struct SolverSettings {
    pub pgd: PgdSettings,
    pub barrier: BarrierSettings,
    pub mm_max_iterations: usize,
    pub mm_rel_tol: f64,
    /// Squared extrapolation between majorization steps.
    pub mm_accelerate: bool,
    pub ao_max_iterations: usize,
    pub ao_rel_tol: f64,
    pub sca_max_rounds: usize,
    pub sca_rel_tol: f64,
    /// Relative tolerance of every scalar bisection.
    pub bisect_tol: f64,
    /// Relative commutator above which two correlations count as misaligned.
    pub alignment_tol: f64,
    /// Checked between iterations by every iterative solver.
    pub cancel: Option<CancelToken>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            pgd: PgdSettings::default(),
            barrier: BarrierSettings::default(),
            mm_max_iterations: 500,
            mm_rel_tol: 1e-8,
            mm_accelerate: true,
            ao_max_iterations: 100,
            ao_rel_tol: 1e-6,
            sca_max_rounds: 200,
            sca_rel_tol: 1e-7,
            bisect_tol: 1e-13,
            alignment_tol: 1e-8,
            cancel: None,
        }
    }
}

/// Optional overrides as they appear in a config file.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOverrides {
    pub pgd_max_iterations: Option<usize>,
    pub pgd_rel_tol: Option<f64>,
    pub pgd_pg_tol: Option<f64>,
    pub pgd_spectral_step: Option<bool>,
    pub mm_max_iterations: Option<usize>,
    pub mm_rel_tol: Option<f64>,
    pub mm_accelerate: Option<bool>,
    pub ao_max_iterations: Option<usize>,
    pub ao_rel_tol: Option<f64>,
    pub sca_max_rounds: Option<usize>,
    pub sca_rel_tol: Option<f64>,
    pub barrier_gap_tol: Option<f64>,
    pub record_wallclock: Option<bool>,
}

impl SolverOverrides {
    pub fn apply(&self, base: &SolverSettings) -> SolverSettings {
        let mut s = base.clone();
        if let Some(v) = self.pgd_max_iterations {
            s.pgd.max_iterations = v;
        }
        if let Some(v) = self.pgd_rel_tol {
            s.pgd.rel_tol = v;
        }
        if let Some(v) = self.pgd_pg_tol {
            s.pgd.pg_tol = v;
        }
        if let Some(v) = self.pgd_spectral_step {
            s.pgd.spectral_step = v;
        }
        if let Some(v) = self.mm_max_iterations {
            s.mm_max_iterations = v;
        }
        if let Some(v) = self.mm_rel_tol {
            s.mm_rel_tol = v;
        }
        if let Some(v) = self.mm_accelerate {
            s.mm_accelerate = v;
        }
        if let Some(v) = self.ao_max_iterations {
            s.ao_max_iterations = v;
        }
        if let Some(v) = self.ao_rel_tol {
            s.ao_rel_tol = v;
        }
        if let Some(v) = self.sca_max_rounds {
            s.sca_max_rounds = v;
        }
        if let Some(v) = self.sca_rel_tol {
            s.sca_rel_tol = v;
        }
        if let Some(v) = self.barrier_gap_tol {
            s.barrier.gap_tol = v;
        }
        s
    }
}
