//! System parameters, correlation models, channel synthesis and the LMMSE
//! estimators for the communication channel and the target response.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IsacError, Result};
use crate::numerics::{power, spd_inverse, CMat, EigenDecomposition, HermitianMatrix, C64, SPD_THRESHOLD};

/// Scalar parameters of one ISAC link. Powers are linear.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    pub m: usize,
    pub n_com: usize,
    pub n_rad: usize,
    pub d: usize,
    pub l: usize,
    pub l_ce: usize,
    pub l_dt: usize,
    pub sigma2: f64,
    pub p_ce: f64,
    pub p_dt: f64,
    pub omega1: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m: 8,
            n_com: 4,
            n_rad: 8,
            d: 4,
            l: 40,
            l_ce: 8,
            l_dt: 32,
            sigma2: 1.0,
            p_ce: 8.0,
            p_dt: 1.0,
            omega1: 0.5,
        }
    }
}

impl SystemConfig {
    pub fn omega2(&self) -> f64 {
        1.0 - self.omega1
    }

    pub fn with_omega1(&self, omega1: f64) -> Self {
        Self { omega1, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(IsacError::invalid(m));
        if self.m == 0 || self.n_com == 0 || self.n_rad == 0 || self.d == 0 {
            return fail("antenna and stream counts must be positive".into());
        }
        if self.l != self.l_ce + self.l_dt {
            return fail(format!("L = {} differs from L_CE + L_DT = {}", self.l, self.l_ce + self.l_dt));
        }
        if self.l_ce < self.m {
            return fail(format!("training length {} is shorter than M = {}", self.l_ce, self.m));
        }
        if self.d > self.m.min(self.n_com) {
            return fail(format!("D = {} exceeds min(M, N_com)", self.d));
        }
        if !(0.0..=1.0).contains(&self.omega1) {
            return fail(format!("omega1 = {} is outside [0, 1]", self.omega1));
        }
        for (name, v) in [("sigma2", self.sigma2), ("P_CE", self.p_ce), ("P_DT", self.p_dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// A transmit correlation matrix with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    matrix: HermitianMatrix,
    evd: EigenDecomposition,
    sqrt: HermitianMatrix,
    inverse: Option<HermitianMatrix>,
}

impl CorrelationMatrix {
    /// Accepts any PSD matrix; the inverse is cached when it exists.
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        let evd = matrix.evd()?;
        let scale = evd.values.first().copied().unwrap_or(0.0).abs().max(1.0);
        let min = evd.values.last().copied().unwrap_or(0.0);
        if min < -1e-12 * scale {
            return Err(IsacError::Singular { eigenvalue: min, threshold: 0.0 });
        }
        let sqrt = evd.map(|l| l.max(0.0).sqrt());
        let inverse = (min > SPD_THRESHOLD).then(|| evd.map(|l| 1.0 / l));
        Ok(Self { matrix, evd, sqrt, inverse })
    }

    pub fn identity(m: usize) -> Self {
        Self::new(HermitianMatrix::identity(m)).expect("identity is positive definite")
    }

    pub fn from_eigen(basis: &CMat, values: &[f64]) -> Result<Self> {
        let e = EigenDecomposition { values: values.to_vec(), basis: basis.clone() };
        Self::new(e.reconstruct())
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn evd(&self) -> &EigenDecomposition {
        &self.evd
    }

    pub fn sqrt(&self) -> &HermitianMatrix {
        &self.sqrt
    }

    pub fn inverse(&self) -> Result<&HermitianMatrix> {
        self.inverse.as_ref().ok_or_else(|| IsacError::Singular {
            eigenvalue: self.evd.values.last().copied().unwrap_or(0.0),
            threshold: SPD_THRESHOLD,
        })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// `[R]_{ij} = ρ^{|i−j|}`.
pub fn exponential_correlation(dim: usize, rho: f64) -> Result<CorrelationMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(IsacError::invalid(format!("correlation coefficient {rho} is outside [0, 1)")));
    }
    let m = CMat::from_fn(dim, dim, |i, j| C64::new(rho.powi(i.abs_diff(j) as i32), 0.0));
    CorrelationMatrix::new(HermitianMatrix::new(m)?)
}

fn check_budget(what: &str, p: f64, budget: f64) -> Result<()> {
    if p > budget * (1.0 + 1e-9) {
        return Err(IsacError::invalid(format!("{what} power {p} exceeds the budget {budget}")));
    }
    Ok(())
}

/// Training matrix `X` (M×L_CE) with its Gram `XXᴴ`.
#[derive(Clone, Debug)]
pub struct TrainingSignal {
    x: CMat,
    gram: HermitianMatrix,
}

impl TrainingSignal {
    pub fn new(x: CMat, budget: f64) -> Result<Self> {
        check_budget("training", power(&x), budget)?;
        let gram = HermitianMatrix::gram(&x);
        Ok(Self { x, gram })
    }

    pub fn zeros(m: usize, l_ce: usize) -> Self {
        Self { x: CMat::zeros(m, l_ce), gram: HermitianMatrix::zeros(m) }
    }

    pub fn matrix(&self) -> &CMat {
        &self.x
    }

    pub fn gram(&self) -> &HermitianMatrix {
        &self.gram
    }

    pub fn power(&self) -> f64 {
        power(&self.x)
    }
}

/// Transmit beamformer `W` (M×D).
#[derive(Clone, Debug)]
pub struct Beamformer {
    w: CMat,
}

impl Beamformer {
    pub fn new(w: CMat, budget: f64) -> Result<Self> {
        check_budget("transmit", power(&w), budget)?;
        Ok(Self { w })
    }

    pub fn matrix(&self) -> &CMat {
        &self.w
    }

    pub fn into_matrix(self) -> CMat {
        self.w
    }

    pub fn power(&self) -> f64 {
        power(&self.w)
    }
}

/// LMMSE channel estimate `Ĥ` with its error and estimate covariances.
#[derive(Clone, Debug)]
pub struct ChannelEstimate {
    pub h_hat: CMat,
    pub r_delta: HermitianMatrix,
    pub r_hhat: HermitianMatrix,
}

/// `(R⁻¹ + XXᴴ/σ²)⁻¹`, the per-row LMMSE error covariance.
pub fn error_covariance(r: &CorrelationMatrix, gram: &HermitianMatrix, sigma2: f64) -> Result<HermitianMatrix> {
    spd_inverse(&r.inverse()?.add(&gram.scale(1.0 / sigma2)))
}

/// Channel statistics after training, independent of the received samples.
pub fn estimate_statistics(
    r_h: &CorrelationMatrix,
    training: &TrainingSignal,
    sigma2: f64,
) -> Result<(HermitianMatrix, HermitianMatrix)> {
    let r_delta = error_covariance(r_h, training.gram(), sigma2)?;
    let r_hhat = r_h.matrix().sub(&r_delta);
    Ok((r_delta, r_hhat))
}

/// `Y (Pᴴ R P + σ² I)⁻¹ Pᴴ R` for observations `Y = A P + noise`.
pub fn lmmse_estimate(y: &CMat, p: &CMat, r: &CorrelationMatrix, sigma2: f64) -> Result<CMat> {
    if y.ncols() != p.ncols() || p.nrows() != r.dim() {
        return Err(IsacError::invalid(format!(
            "observation {}x{} does not match pilot {}x{}",
            y.nrows(),
            y.ncols(),
            p.nrows(),
            p.ncols()
        )));
    }
    let ph_r = p.adjoint() * r.matrix().matrix();
    let gram = HermitianMatrix::from_raw(&ph_r * p).add_identity(sigma2);
    let filter = gram
        .solve(&ph_r)
        .map_err(|e| IsacError::numerical(format!("LMMSE Gram solve failed: {e}")))?;
    Ok(y * filter)
}

/// Estimate of `H` from `Y = H X + N`.
pub fn lmmse_channel_estimate(
    y: &CMat,
    training: &TrainingSignal,
    r_h: &CorrelationMatrix,
    sigma2: f64,
) -> Result<ChannelEstimate> {
    let h_hat = lmmse_estimate(y, training.matrix(), r_h, sigma2)?;
    let (r_delta, r_hhat) = estimate_statistics(r_h, training, sigma2)?;
    Ok(ChannelEstimate { h_hat, r_delta, r_hhat })
}

/// Estimate of the target response `G` from `Y_rad = G [X, WS] + Z`.
pub fn lmmse_trm_estimate(y_rad: &CMat, p: &CMat, r_g: &CorrelationMatrix, sigma2: f64) -> Result<CMat> {
    lmmse_estimate(y_rad, p, r_g, sigma2)
}

/// `[X, W S]`, the full-block radar illumination.
pub fn full_block(x: &CMat, w: &CMat, s: &CMat) -> CMat {
    let ws = w * s;
    let mut p = CMat::zeros(x.nrows(), x.ncols() + ws.ncols());
    p.columns_mut(0, x.ncols()).copy_from(x);
    p.columns_mut(x.ncols(), ws.ncols()).copy_from(&ws);
    p
}

/// One realization of both channels.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub h: CMat,
    pub g: CMat,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`; adding trials never changes earlier seeds.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Per-trial random source: ChaCha8 keyed by an explicit seed.
#[derive(Clone, Debug)]
pub struct TrialRng {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl TrialRng {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn for_trial(master: u64, index: u64) -> Self {
        Self::new(trial_seed(master, index))
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform();
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `CN(0, 1)`: variance 1/2 per real and imaginary part.
    pub fn complex_normal(&mut self) -> C64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        C64::new(s * self.normal(), s * self.normal())
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> CMat {
        let mut z = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                z[(i, j)] = self.complex_normal();
            }
        }
        z
    }

    /// `Z R^{1/2}` with i.i.d. `CN(0, 1)` entries in `Z`.
    pub fn channel(&mut self, r: &CorrelationMatrix, rows: usize) -> CMat {
        self.gaussian_matrix(rows, r.dim()) * r.sqrt().matrix()
    }

    /// White noise with variance `sigma2` per entry.
    pub fn noise(&mut self, rows: usize, cols: usize, sigma2: f64) -> CMat {
        self.gaussian_matrix(rows, cols).scale(sigma2.sqrt())
    }

    /// Entries drawn uniformly from `(±1 ± j)/√2`.
    pub fn qpsk(&mut self, d: usize, l: usize) -> CMat {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = CMat::zeros(d, l);
        let mut bits = 0u64;
        let mut left = 0;
        for i in 0..d {
            for j in 0..l {
                if left == 0 {
                    bits = self.rng.next_u64();
                    left = 32;
                }
                let re = if bits & 1 == 0 { s } else { -s };
                let im = if bits & 2 == 0 { s } else { -s };
                bits >>= 2;
                left -= 1;
                out[(i, j)] = C64::new(re, im);
            }
        }
        out
    }
}

pub fn synthesize_channel(r: &CorrelationMatrix, rows: usize, seed: u64) -> CMat {
    TrialRng::new(seed).channel(r, rows)
}

pub fn qpsk_symbols(d: usize, l_dt: usize, seed: u64) -> CMat {
    TrialRng::new(seed).qpsk(d, l_dt)
}
