use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isac_core::experiments::{
    algorithm_comparison, approx_csv, approximation_study, convergence_csv, emit_csv, mse_region_sweep, run_sweep,
    selftest, sweep_csv, ExperimentConfig,
};
use isac_core::IsacError;

#[derive(Parser)]
#[command(name = "isac", version, about = "Training and transmission design experiments for MIMO ISAC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Every configured scheme at every sweep point
    Run(Common),
    /// Data/target MSE trade-off over the weight grid
    Region(Common),
    /// Exact against approximate target MSE over the data length grid
    Approx(Common),
    /// Objective histories of the alternating and power-allocation designs
    CompareAlg(Common),
    /// Quick invariant checks on the configured system
    Selftest(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment description; defaults apply when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for the Monte Carlo trials
    #[arg(long)]
    threads: Option<usize>,
    /// Replace an existing output file
    #[arg(long)]
    overwrite: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, IsacError> {
        let mut exp = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            exp.seed = s;
        }
        if let Some(t) = self.trials {
            if t == 0 {
                return Err(IsacError::Config("--trials must be at least 1".into()));
            }
            exp.trials = t;
        }
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(IsacError::Config("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| IsacError::Config(format!("thread pool: {e}")))?;
        }
        Ok(exp)
    }

    fn write(&self, text: &str) -> Result<(), IsacError> {
        match &self.out {
            Some(p) => emit(text, p, self.overwrite),
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

fn emit(text: &str, path: &Path, overwrite: bool) -> Result<(), IsacError> {
    emit_csv(text, path, overwrite).map_err(|e| match e {
        IsacError::Io(io) => IsacError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn default_omega_grid(exp: &ExperimentConfig) -> Vec<f64> {
    if exp.omega1_grid.len() > 1 {
        exp.omega1_grid.clone()
    } else {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    }
}

fn execute(command: Command) -> Result<(), IsacError> {
    match command {
        Command::Run(c) => {
            let exp = c.load()?;
            c.write(&sweep_csv(&run_sweep(&exp)?))
        }
        Command::Region(c) => {
            let exp = c.load()?;
            let boundaries = mse_region_sweep(&exp, &default_omega_grid(&exp))?;
            for b in &boundaries {
                eprintln!(
                    "{}: pareto monotone {}, min mse_com {:.6}, min mse_rad {:.6}",
                    b.scheme,
                    b.is_pareto_monotone(0.0),
                    b.min_mse_com(),
                    b.min_mse_rad()
                );
            }
            let runs: Vec<_> = boundaries.into_iter().flat_map(|b| b.runs).collect();
            c.write(&sweep_csv(&runs))
        }
        Command::Approx(c) => {
            let exp = c.load()?;
            let rows = approximation_study(&exp, &exp.points()[0])?;
            c.write(&approx_csv(&rows))
        }
        Command::CompareAlg(c) => {
            let exp = c.load()?;
            let cmp = algorithm_comparison(&exp, &exp.points()[0])?;
            eprintln!(
                "algorithm2 {:.9} ({:.1} ms), algorithm3 {:.9} ({:.1} ms), relative difference {:.2e}",
                cmp.alternating.objective,
                cmp.alternating.wallclock_ms,
                cmp.power_allocation.objective,
                cmp.power_allocation.wallclock_ms,
                cmp.relative_difference()
            );
            c.write(&convergence_csv(&cmp, exp.record_wallclock))
        }
        Command::Selftest(c) => {
            let exp = c.load()?;
            let checks = selftest(&exp)?;
            let mut report = String::new();
            for k in &checks {
                report.push_str(&format!("{} {}: {}\n", if k.passed { "PASS" } else { "FAIL" }, k.name, k.detail));
            }
            c.write(&report)?;
            match checks.iter().find(|k| !k.passed) {
                Some(k) => Err(IsacError::InvalidInput(format!("self-test check {} failed", k.name))),
                None => Ok(()),
            }
        }
    }
}

fn exit_code(e: &IsacError) -> u8 {
    match e.root() {
        IsacError::Config(_) => 2,
        IsacError::Io(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
