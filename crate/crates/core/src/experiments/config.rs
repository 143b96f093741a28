use std::path::Path;

use serde::Deserialize;

use crate::design::Scheme;
use crate::error::{IsacError, Result};
use crate::model::{exponential_correlation, CorrelationMatrix, SystemConfig};
use crate::settings::{SolverOverrides, SolverSettings};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SystemSection {
    m: usize,
    n_com: usize,
    n_rad: usize,
    d: usize,
    l_ce: usize,
    l_dt: usize,
    sigma2: f64,
    /// Correlation coefficient of the exponential model for `R_H`.
    rho: f64,
    /// Same for `R_G`; absent means `R_G = I`.
    rho_g: Option<f64>,
    omega1: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let s = SystemConfig::default();
        Self {
            m: s.m,
            n_com: s.n_com,
            n_rad: s.n_rad,
            d: s.d,
            l_ce: s.l_ce,
            l_dt: s.l_dt,
            sigma2: s.sigma2,
            rho: 0.5,
            rho_g: None,
            omega1: s.omega1,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    gamma_ce_db: Vec<f64>,
    gamma_dt_db: Vec<f64>,
    /// Use the training SNR grid for both stages instead of the product grid.
    tie_gammas: bool,
    omega1: Vec<f64>,
    l_dt: Vec<usize>,
    trials: usize,
    seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gamma_ce_db: vec![1.0],
            gamma_dt_db: vec![0.0, 4.0, 8.0, 12.0],
            tie_gammas: false,
            omega1: Vec::new(),
            l_dt: vec![8, 14, 20, 26, 32, 40],
            trials: 1000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SchemesSection {
    list: Vec<String>,
    /// Solve `joint` by power allocation when the correlations are aligned.
    structured: bool,
}

impl Default for SchemesSection {
    fn default() -> Self {
        Self { list: vec!["sequential".into(), "existing".into()], structured: false }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    system: SystemSection,
    sweep: SweepSection,
    solver: SolverOverrides,
    schemes: SchemesSection,
}

/// One operating point of a sweep, in both dB labels and linear powers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub omega1: f64,
    pub gamma_ce_db: f64,
    pub gamma_dt_db: f64,
    pub p_ce: f64,
    pub p_dt: f64,
}

/// Validated experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// System template; powers and weight are replaced per sweep point.
    pub system: SystemConfig,
    pub rho: f64,
    pub rho_g: Option<f64>,
    pub r_h: CorrelationMatrix,
    pub r_g: CorrelationMatrix,
    pub gamma_ce_db: Vec<f64>,
    pub gamma_dt_db: Vec<f64>,
    pub tie_gammas: bool,
    pub omega1_grid: Vec<f64>,
    pub l_dt_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub structured: bool,
    pub settings: SolverSettings,
    pub record_wallclock: bool,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| IsacError::Config(e.message().to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| e.context(&path.display().to_string()))
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let s = raw.system;
        let system = SystemConfig {
            m: s.m,
            n_com: s.n_com,
            n_rad: s.n_rad,
            d: s.d,
            l: s.l_ce + s.l_dt,
            l_ce: s.l_ce,
            l_dt: s.l_dt,
            sigma2: s.sigma2,
            p_ce: s.l_ce as f64 * s.sigma2,
            p_dt: s.sigma2,
            omega1: s.omega1,
        };
        system.validate().map_err(|e| IsacError::Config(e.to_string()))?;
        let correlation = |rho: f64, what: &str| {
            if !(0.0..1.0).contains(&rho) {
                return Err(IsacError::Config(format!("{what} = {rho} must lie in [0, 1)")));
            }
            exponential_correlation(s.m, rho)
        };
        let r_h = correlation(s.rho, "rho")?;
        let r_g = match s.rho_g {
            Some(rho) => correlation(rho, "rho_g")?,
            None => CorrelationMatrix::identity(s.m),
        };
        let sw = raw.sweep;
        if sw.gamma_ce_db.is_empty() || (sw.gamma_dt_db.is_empty() && !sw.tie_gammas) {
            return Err(IsacError::Config("SNR grids must be nonempty".into()));
        }
        if sw.gamma_ce_db.iter().chain(&sw.gamma_dt_db).any(|g| !g.is_finite()) {
            return Err(IsacError::Config("SNR grid entries must be finite".into()));
        }
        let omega1_grid = if sw.omega1.is_empty() { vec![s.omega1] } else { sw.omega1 };
        if omega1_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(IsacError::Config("omega1 grid entries must lie in [0, 1]".into()));
        }
        if sw.trials == 0 {
            return Err(IsacError::Config("trials must be at least 1".into()));
        }
        if sw.l_dt.is_empty() || sw.l_dt.windows(2).any(|p| p[1] <= p[0]) || sw.l_dt[0] == 0 {
            return Err(IsacError::Config("l_dt grid must be nonempty, positive and increasing".into()));
        }
        let schemes = raw
            .schemes
            .list
            .iter()
            .map(|t| t.parse::<Scheme>())
            .collect::<Result<Vec<_>>>()?;
        if schemes.is_empty() {
            return Err(IsacError::Config("scheme list is empty".into()));
        }
        let settings = raw.solver.apply(&SolverSettings::default());
        Ok(Self {
            system,
            rho: s.rho,
            rho_g: s.rho_g,
            r_h,
            r_g,
            gamma_ce_db: sw.gamma_ce_db,
            gamma_dt_db: sw.gamma_dt_db,
            tie_gammas: sw.tie_gammas,
            omega1_grid,
            l_dt_grid: sw.l_dt,
            trials: sw.trials,
            seed: sw.seed,
            schemes,
            structured: raw.schemes.structured,
            settings,
            record_wallclock: raw.solver.record_wallclock.unwrap_or(false),
        })
    }

    pub fn point(&self, omega1: f64, gamma_ce_db: f64, gamma_dt_db: f64) -> SweepPoint {
        let s = &self.system;
        SweepPoint {
            omega1,
            gamma_ce_db,
            gamma_dt_db,
            p_ce: db_to_linear(gamma_ce_db) * s.l_ce as f64 * s.sigma2,
            p_dt: db_to_linear(gamma_dt_db) * s.sigma2,
        }
    }

    /// Sweep points in output order: SNR pairs outer, weights inner.
    pub fn points(&self) -> Vec<SweepPoint> {
        let pairs: Vec<(f64, f64)> = if self.tie_gammas {
            self.gamma_ce_db.iter().map(|&g| (g, g)).collect()
        } else {
            self.gamma_ce_db
                .iter()
                .flat_map(|&c| self.gamma_dt_db.iter().map(move |&d| (c, d)))
                .collect()
        };
        pairs
            .into_iter()
            .flat_map(|(c, d)| self.omega1_grid.iter().map(move |&w| (w, c, d)))
            .map(|(w, c, d)| self.point(w, c, d))
            .collect()
    }

    /// System parameters at a sweep point.
    pub fn system_at(&self, point: &SweepPoint) -> SystemConfig {
        SystemConfig { p_ce: point.p_ce, p_dt: point.p_dt, omega1: point.omega1, ..self.system.clone() }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_raw(RawConfig::default()).expect("default configuration is valid")
    }
}
