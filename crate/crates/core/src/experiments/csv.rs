//! CSV emission. Floats use the shortest representation that parses back to
//! the same `f64`, so output is locale independent and round-trips exactly.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use super::runner::SchemeRun;
use super::studies::{AlgorithmComparison, ApproxRow};
use crate::error::Result;

pub const SWEEP_HEADER: &str =
    "scheme,omega1,gamma_ce_db,gamma_dt_db,trials,mse_com,mse_rad,mse_ce,mi_com,mi_rad,objective,wallclock_ms,converged";
pub const APPROX_HEADER: &str = "l_dt,mse_rad_exact,mse_rad_approx,rel_gap,trials";
pub const CONVERGENCE_HEADER: &str = "algorithm,iteration,wallclock_ms,objective";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn sweep_csv(runs: &[SchemeRun]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in runs {
        let d = &r.design;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.scheme,
            r.point.omega1,
            r.point.gamma_ce_db,
            r.point.gamma_dt_db,
            r.trials,
            r.mse_com,
            r.mse_rad,
            opt(d.analytic.mse_ce),
            r.mi_com,
            r.mi_rad,
            d.objective,
            d.wallclock_ms,
            d.converged
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn approx_csv(rows: &[ApproxRow]) -> String {
    let mut out = String::from(APPROX_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.l_dt, r.mse_rad_exact, r.mse_rad_approx, r.rel_gap, r.trials).unwrap();
    }
    out
}

/// Objective histories; times are zeroed unless `record_wallclock`.
pub fn convergence_csv(cmp: &AlgorithmComparison, record_wallclock: bool) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for (name, trace) in [("algorithm2", &cmp.alternating_trace), ("algorithm3", &cmp.power_allocation_trace)] {
        for p in trace {
            let t = if record_wallclock { p.wallclock_ms } else { 0.0 };
            writeln!(out, "{name},{},{t},{}", p.iteration, p.objective).unwrap();
        }
    }
    out
}

/// Writes `contents` to `path`. An existing file is an error unless `overwrite`.
pub fn emit_csv(contents: &str, path: &Path, overwrite: bool) -> Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut f = opts.open(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}
