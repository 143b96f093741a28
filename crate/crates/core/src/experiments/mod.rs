//! Monte Carlo evaluation of the design schemes and the comparison studies.
//!
//! Every trial draws its own random stream from the master seed and the
//! trial index, in the order `H`, training noise, `G`, symbols, radar noise.
//! Results are reduced in trial order, so output does not depend on the
//! thread count.

mod config;
mod csv;
mod runner;
mod selftest;
mod studies;

pub use config::{db_to_linear, ExperimentConfig, SweepPoint};
pub use csv::{approx_csv, convergence_csv, emit_csv, sweep_csv, APPROX_HEADER, CONVERGENCE_HEADER, SWEEP_HEADER};
pub use runner::{run_scheme, run_scheme_with, run_sweep, scheme_trials, SchemeRun, TrialOutcome};
pub use selftest::{selftest, Check};
pub use studies::{
    algorithm_comparison, approximation_study, gap_decreasing, mse_region_sweep, AlgorithmComparison, ApproxRow,
    RegionBoundary,
};
