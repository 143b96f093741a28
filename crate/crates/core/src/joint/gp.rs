//! Power allocation for correlations sharing an eigenbasis, by successive
//! convex approximation of a geometric program in log variables.

use nalgebra::DVector;
use web_time::Instant;

use super::{statistical_report, TracePoint};
use crate::design::{DesignResult, Scheme};
use crate::error::{IsacError, Result};
use crate::model::{CorrelationMatrix, SystemConfig};
use crate::numerics::{barrier_newton, is_cancelled, joint_eigenbasis, CMat, ConvexProgram, ExpAffine, HermitianMatrix, C64};
use crate::settings::SolverSettings;

const NUDGE: f64 = 1e-6;
const FLOOR: f64 = 1e-10;

/// Training and transmit powers per common eigendirection, with the
/// auxiliary variables of the geometric program.
#[derive(Clone, Debug)]
pub struct PowerAllocationState {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    /// Per-stream estimation-error interference `λ_H σ² w / (λ_H x + σ²)`.
    pub xi: Vec<f64>,
    /// Total effective noise `Σ ξ + σ²`.
    pub t: f64,
    /// Per-stream inverse data MSE.
    pub kappa_com: Vec<f64>,
    /// Per-direction inverse target MSE.
    pub kappa_rad: Vec<f64>,
    pub lambda_h: Vec<f64>,
    pub lambda_g: Vec<f64>,
    pub basis: CMat,
}

impl PowerAllocationState {
    pub fn x_tilde(&self) -> Vec<f64> {
        self.x.iter().map(|v| v.ln()).collect()
    }

    pub fn w_tilde(&self) -> Vec<f64> {
        self.w.iter().map(|v| v.ln()).collect()
    }

    /// `X = U [diag(√x), 0]`.
    pub fn training(&self, l_ce: usize) -> CMat {
        let m = self.x.len();
        let mut x = CMat::zeros(m, l_ce);
        for i in 0..m {
            x.set_column(i, &(self.basis.column(i) * C64::new(self.x[i].sqrt(), 0.0)));
        }
        x
    }

    /// `W = U_{1:D} diag(√w)`.
    pub fn beamformer(&self) -> CMat {
        let m = self.x.len();
        let mut w = CMat::zeros(m, self.w.len());
        for i in 0..self.w.len() {
            w.set_column(i, &(self.basis.column(i) * C64::new(self.w[i].sqrt(), 0.0)));
        }
        w
    }
}

/// SCA history: the starting allocation, then one point per round.
#[derive(Clone, Debug, Default)]
pub struct ScaTrace {
    pub points: Vec<TracePoint>,
    pub rounds: usize,
    pub converged: bool,
}

/// Objective of the power-allocation problem. The first `D` directions carry
/// both training and data power; the remaining ones carry training only.
pub fn power_allocation_objective(lambda_h: &[f64], lambda_g: &[f64], x: &[f64], w: &[f64], config: &SystemConfig) -> f64 {
    let (m, d) = (x.len(), w.len());
    let s2 = config.sigma2;
    let mut f = 0.0;
    if config.omega1 > 0.0 {
        let t: f64 = (0..d).map(|i| lambda_h[i] * s2 * w[i] / (lambda_h[i] * x[i] + s2)).sum::<f64>() + s2;
        let n = config.n_com as f64;
        let com: f64 = (0..d)
            .map(|i| {
                let gain = n * lambda_h[i].powi(2) * w[i] * x[i] / (t * (lambda_h[i] * x[i] + s2));
                1.0 / (1.0 + gain)
            })
            .sum();
        f += config.omega1 / d as f64 * com;
    }
    if config.omega2() > 0.0 {
        let l = config.l_dt as f64;
        let rad: f64 = (0..m)
            .map(|i| {
                let data = if i < d { l * w[i] } else { 0.0 };
                1.0 / (1.0 / lambda_g[i] + (x[i] + data) / s2)
            })
            .sum();
        f += config.omega2() / m as f64 * rad;
    }
    f
}

/// Variable indices of the log-domain program. Blocks for a zero weight are absent.
#[derive(Clone, Copy, Debug)]
struct Layout {
    m: usize,
    d: usize,
    com: bool,
    rad: bool,
}

impl Layout {
    fn x(&self, i: usize) -> usize {
        i
    }
    fn w(&self, i: usize) -> usize {
        self.m + i
    }
    fn xi(&self, i: usize) -> usize {
        self.m + self.d + i
    }
    fn t(&self) -> usize {
        self.m + 2 * self.d
    }
    fn kc(&self, i: usize) -> usize {
        self.m + 2 * self.d + 1 + i
    }
    fn kr(&self, i: usize) -> usize {
        let base = self.m + self.d + if self.com { 2 * self.d + 1 } else { 0 };
        base + i
    }
    fn dim(&self) -> usize {
        self.m + self.d + if self.com { 2 * self.d + 1 } else { 0 } + if self.rad { self.m } else { 0 }
    }
}

/// Expansion point of one SCA round in log variables.
#[derive(Clone, Debug)]
struct Anchor {
    x: Vec<f64>,
    w: Vec<f64>,
    t: f64,
}

/// `e^{z0}(1 + z − z0)` added to `c` as a lower bound of `e^z`, scaled by `scale`,
/// for `z = Σ vars` and `z0 = Σ anchors`.
fn minus_linearization(mut c: ExpAffine, scale: f64, vars: &[usize], z0: f64) -> ExpAffine {
    let e0 = scale * z0.exp();
    for &v in vars {
        c = c.linear(v, -e0);
    }
    c.constant(-e0 * (1.0 - z0))
}

fn linearized(z: f64, z0: f64) -> f64 {
    z0.exp() * (1.0 + z - z0)
}

struct Instance<'a> {
    lh: &'a [f64],
    lg: &'a [f64],
    config: &'a SystemConfig,
    layout: Layout,
}

impl Instance<'_> {
    fn program(&self, a: &Anchor) -> ConvexProgram {
        let Layout { m, d, com, rad } = self.layout;
        let lay = self.layout;
        let cfg = self.config;
        let s2 = cfg.sigma2;
        let n = cfg.n_com as f64;
        let l = cfg.l_dt as f64;

        let mut objective = ExpAffine::new();
        if com {
            for i in 0..d {
                objective = objective.term(cfg.omega1 / d as f64, &[(lay.kc(i), -1.0)], 0.0);
            }
        }
        if rad {
            for i in 0..m {
                objective = objective.term(cfg.omega2() / m as f64, &[(lay.kr(i), -1.0)], 0.0);
            }
        }

        let mut cons = Vec::new();
        let mut budget_x = ExpAffine::new().constant(-cfg.p_ce);
        for i in 0..m {
            budget_x = budget_x.term(1.0, &[(lay.x(i), 1.0)], 0.0);
        }
        cons.push(budget_x);
        let mut budget_w = ExpAffine::new().constant(-cfg.p_dt);
        for i in 0..d {
            budget_w = budget_w.term(1.0, &[(lay.w(i), 1.0)], 0.0);
        }
        cons.push(budget_w);
        let (floor_x, floor_w) = ((FLOOR * cfg.p_ce).ln(), (FLOOR * cfg.p_dt).ln());
        for i in 0..m {
            cons.push(ExpAffine::new().linear(lay.x(i), -1.0).constant(floor_x));
        }
        for i in 0..d {
            cons.push(ExpAffine::new().linear(lay.w(i), -1.0).constant(floor_w));
        }

        if com {
            for i in 0..d {
                let lh = self.lh[i];
                // κ t (λx + σ²) ≤ t (λx + σ²) + N λ² w x, right side linearized.
                let mut c = ExpAffine::new()
                    .term(lh, &[(lay.x(i), 1.0), (lay.kc(i), 1.0), (lay.t(), 1.0)], 0.0)
                    .term(s2, &[(lay.kc(i), 1.0), (lay.t(), 1.0)], 0.0);
                c = minus_linearization(c, s2, &[lay.t()], a.t);
                c = minus_linearization(c, lh, &[lay.t(), lay.x(i)], a.t + a.x[i]);
                c = minus_linearization(c, n * lh * lh, &[lay.x(i), lay.w(i)], a.x[i] + a.w[i]);
                cons.push(c);
                // λσ² w / ξ ≤ σ² + λx.
                let c5 = ExpAffine::new().term(lh * s2, &[(lay.w(i), 1.0), (lay.xi(i), -1.0)], 0.0).constant(-s2);
                cons.push(minus_linearization(c5, lh, &[lay.x(i)], a.x[i]));
            }
            let mut c6 = ExpAffine::new().term(s2, &[(lay.t(), -1.0)], 0.0).constant(-1.0);
            for i in 0..d {
                c6 = c6.term(1.0, &[(lay.xi(i), 1.0), (lay.t(), -1.0)], 0.0);
            }
            cons.push(c6);
        }
        if rad {
            for i in 0..m {
                let mut c = ExpAffine::new().term(1.0, &[(lay.kr(i), 1.0)], 0.0).constant(-1.0 / self.lg[i]);
                c = minus_linearization(c, 1.0 / s2, &[lay.x(i)], a.x[i]);
                if i < d {
                    c = minus_linearization(c, l / s2, &[lay.w(i)], a.w[i]);
                }
                cons.push(c);
            }
        }
        ConvexProgram { dim: lay.dim(), objective, constraints: cons }
    }

    /// Strictly feasible point of the round anchored at `a`, built from the
    /// anchor's powers pulled slightly inward.
    fn interior_point(&self, a: &Anchor) -> Result<DVector<f64>> {
        let Layout { m, d, com, rad } = self.layout;
        let lay = self.layout;
        let cfg = self.config;
        let s2 = cfg.sigma2;
        let (floor_x, floor_w) = ((FLOOR * cfg.p_ce).ln(), (FLOOR * cfg.p_dt).ln());
        let mut z = DVector::zeros(lay.dim());
        let x: Vec<f64> = a.x.iter().map(|&v| (v - NUDGE).max(floor_x + NUDGE)).collect();
        let w: Vec<f64> = a.w.iter().map(|&v| (v - NUDGE).max(floor_w + NUDGE)).collect();
        for i in 0..m {
            z[lay.x(i)] = x[i];
        }
        for i in 0..d {
            z[lay.w(i)] = w[i];
        }
        let log_checked = |v: f64| -> Result<f64> {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(IsacError::InfeasibleStart("linearized constraint has no interior".into()))
            }
        };
        if com {
            let mut xi_sum = 0.0;
            for i in 0..d {
                let lh = self.lh[i];
                let xi = lh * s2 * w[i].exp() / log_checked(s2 + lh * linearized(x[i], a.x[i]))?.exp();
                let xi_t = xi.ln() + NUDGE;
                z[lay.xi(i)] = xi_t;
                xi_sum += xi_t.exp();
            }
            let t = (xi_sum + s2).ln() + NUDGE;
            z[lay.t()] = t;
            let n = cfg.n_com as f64;
            for i in 0..d {
                let lh = self.lh[i];
                let rhs = s2 * linearized(t, a.t)
                    + lh * linearized(t + x[i], a.t + a.x[i])
                    + n * lh * lh * linearized(x[i] + w[i], a.x[i] + a.w[i]);
                z[lay.kc(i)] = log_checked(rhs)? - t - (lh * x[i].exp() + s2).ln() - NUDGE;
            }
        }
        if rad {
            let l = cfg.l_dt as f64;
            for i in 0..m {
                let mut rhs = 1.0 / self.lg[i] + linearized(x[i], a.x[i]) / s2;
                if i < d {
                    rhs += l / s2 * linearized(w[i], a.w[i]);
                }
                z[lay.kr(i)] = log_checked(rhs)? - NUDGE;
            }
        }
        Ok(z)
    }

    fn objective(&self, x: &[f64], w: &[f64]) -> f64 {
        power_allocation_objective(self.lh, self.lg, x, w, self.config)
    }

    /// Effective noise `Σ λσ²w/(λx + σ²) + σ²` in log form.
    fn log_noise(&self, x: &[f64], w: &[f64]) -> f64 {
        let s2 = self.config.sigma2;
        let sum: f64 = (0..w.len()).map(|i| self.lh[i] * s2 * w[i] / (self.lh[i] * x[i] + s2)).sum();
        (sum + s2).ln()
    }
}

/// SCA rounds from the uniform allocation for eigenvalues in a fixed order.
pub(crate) fn allocate(
    lh: &[f64],
    lg: &[f64],
    config: &SystemConfig,
    settings: &SolverSettings,
    clock: Instant,
) -> Result<(Vec<f64>, Vec<f64>, f64, ScaTrace)> {
    let (m, d) = (lh.len(), config.d);
    let inst = Instance {
        lh,
        lg,
        config,
        layout: Layout { m, d, com: config.omega1 > 0.0, rad: config.omega2() > 0.0 },
    };
    let mut x = vec![config.p_ce / m as f64; m];
    let mut w = vec![config.p_dt / d as f64; d];
    let mut anchor = Anchor {
        x: x.iter().map(|v| v.ln()).collect(),
        w: w.iter().map(|v| v.ln()).collect(),
        t: inst.log_noise(&x, &w),
    };
    let mut f = inst.objective(&x, &w);
    let mut trace = ScaTrace::default();
    trace.points.push(TracePoint { iteration: 0, wallclock_ms: 0.0, objective: f });
    for round in 0..settings.sca_max_rounds {
        if is_cancelled(&settings.cancel) {
            return Err(IsacError::Cancelled { iterations: round });
        }
        let program = inst.program(&anchor);
        let start = inst.interior_point(&anchor)?;
        let out = barrier_newton(&program, start, &settings.barrier, &settings.cancel)
            .map_err(|e| e.context(&format!("power allocation round {}", round + 1)))?;
        let lay = inst.layout;
        let x_new: Vec<f64> = (0..m).map(|i| out.z[lay.x(i)].exp()).collect();
        let w_new: Vec<f64> = (0..d).map(|i| out.z[lay.w(i)].exp()).collect();
        let f_new = inst.objective(&x_new, &w_new);
        trace.rounds = round + 1;
        let change = (f - f_new).abs() / f.abs().max(f64::MIN_POSITIVE);
        if f_new <= f {
            x = x_new;
            w = w_new;
            f = f_new;
            anchor = Anchor {
                x: (0..m).map(|i| out.z[lay.x(i)]).collect(),
                w: (0..d).map(|i| out.z[lay.w(i)]).collect(),
                t: if lay.com { out.z[lay.t()] } else { inst.log_noise(&x, &w) },
            };
        }
        trace.points.push(TracePoint { iteration: round + 1, wallclock_ms: clock.elapsed().as_secs_f64() * 1e3, objective: f });
        if change < settings.sca_rel_tol {
            trace.converged = true;
            break;
        }
    }

    Ok((x, w, f, trace))
}

/// Joint design for correlations that share an eigenbasis.
///
/// Training and beamformer are restricted to the common eigenvectors and only
/// the powers are optimized. Directions are ordered by `λ_H` descending, ties
/// by `λ_G`; the first `D` carry data. Each round solves the convex
/// restriction obtained by linearizing the concave side of every nonconvex
/// constraint at the previous solution, which keeps the previous solution
/// feasible and the objective nonincreasing.
pub fn algorithm3(
    r_h: &CorrelationMatrix,
    r_g: &CorrelationMatrix,
    config: &SystemConfig,
    settings: &SolverSettings,
) -> Result<(DesignResult, PowerAllocationState, ScaTrace)> {
    config.validate()?;
    let clock = Instant::now();
    let basis = joint_eigenbasis(r_h.matrix(), r_g.matrix(), settings.alignment_tol)?;
    let (x, w, f, trace) = allocate(&basis.first, &basis.second, config, settings, clock)?;
    let (m, d) = (r_h.dim(), config.d);
    let inst = Instance {
        lh: &basis.first,
        lg: &basis.second,
        config,
        layout: Layout { m, d, com: config.omega1 > 0.0, rad: config.omega2() > 0.0 },
    };
    let s2 = config.sigma2;
    let xi: Vec<f64> = (0..d).map(|i| inst.lh[i] * s2 * w[i] / (inst.lh[i] * x[i] + s2)).collect();
    let t = xi.iter().sum::<f64>() + s2;
    let n = config.n_com as f64;
    let kappa_com = (0..d)
        .map(|i| 1.0 + n * inst.lh[i].powi(2) * w[i] * x[i] / (t * (inst.lh[i] * x[i] + s2)))
        .collect();
    let kappa_rad = (0..m)
        .map(|i| 1.0 / inst.lg[i] + (x[i] + if i < d { config.l_dt as f64 * w[i] } else { 0.0 }) / s2)
        .collect();
    let state = PowerAllocationState {
        x,
        w,
        xi,
        t,
        kappa_com,
        kappa_rad,
        lambda_h: basis.first.clone(),
        lambda_g: basis.second.clone(),
        basis: basis.basis,
    };
    let x_mat = state.training(config.l_ce);
    let w_mat = state.beamformer();
    let r_x = HermitianMatrix::gram(&x_mat);
    let analytic = statistical_report(r_h, r_g, &r_x, &w_mat, config)?;
    let design = DesignResult {
        scheme: Scheme::JointGp,
        x: x_mat,
        w: w_mat,
        objective: f,
        analytic,
        empirical: None,
        wallclock_ms: clock.elapsed().as_secs_f64() * 1e3,
        converged: trace.converged,
        iterations: trace.rounds,
    };
    Ok((design, state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::joint_objective;
    use crate::model::exponential_correlation;

    fn aligned(m: usize) -> (CorrelationMatrix, CorrelationMatrix) {
        (exponential_correlation(m, 0.5).unwrap(), CorrelationMatrix::identity(m))
    }

    #[test]
    fn linearization_is_a_lower_bound() {
        let mut rng = crate::model::TrialRng::new(7);
        for _ in 0..100 {
            let (z, z0) = (3.0 * rng.normal(), 3.0 * rng.normal());
            assert!(z.exp() >= linearized(z, z0) - 1e-12 * z.exp().max(1.0));
        }
    }

    #[test]
    fn reduced_objective_matches_matrix_form() {
        let (r_h, r_g) = aligned(8);
        let cfg = SystemConfig::default();
        let basis = joint_eigenbasis(r_h.matrix(), r_g.matrix(), 1e-8).unwrap();
        let x: Vec<f64> = (0..8).map(|i| 0.5 + 0.1 * i as f64).collect();
        let w = vec![0.4, 0.3, 0.2, 0.1];
        let state = PowerAllocationState {
            x: x.clone(),
            w: w.clone(),
            xi: vec![],
            t: 0.0,
            kappa_com: vec![],
            kappa_rad: vec![],
            lambda_h: basis.first.clone(),
            lambda_g: basis.second.clone(),
            basis: basis.basis.clone(),
        };
        let r_x = HermitianMatrix::gram(&state.training(cfg.l_ce));
        let direct = joint_objective(&r_h, &r_g, &r_x, &state.beamformer(), &cfg).unwrap();
        let reduced = power_allocation_objective(&basis.first, &basis.second, &x, &w, &cfg);
        assert!((direct - reduced).abs() < 1e-12);
    }

    #[test]
    fn previous_solution_stays_feasible() {
        let (r_h, r_g) = aligned(8);
        let cfg = SystemConfig::default();
        let basis = joint_eigenbasis(r_h.matrix(), r_g.matrix(), 1e-8).unwrap();
        let inst = Instance { lh: &basis.first, lg: &basis.second, config: &cfg, layout: Layout { m: 8, d: 4, com: true, rad: true } };
        let x = vec![1.0; 8];
        let w = vec![0.25; 4];
        let mut anchor = Anchor { x: vec![0.0; 8], w: vec![0.25f64.ln(); 4], t: inst.log_noise(&x, &w) };
        for _ in 0..5 {
            let program = inst.program(&anchor);
            let start = inst.interior_point(&anchor).unwrap();
            assert!(program.constraints.iter().all(|c| c.value(&start) < 0.0));
            let out = barrier_newton(&program, start, &crate::numerics::BarrierSettings::default(), &None).unwrap();
            let lay = inst.layout;
            anchor = Anchor {
                x: (0..8).map(|i| out.z[lay.x(i)]).collect(),
                w: (0..4).map(|i| out.z[lay.w(i)]).collect(),
                t: out.z[lay.t()],
            };
            // The solution satisfies the next round's restriction up to the barrier gap.
            let next = inst.program(&anchor);
            assert!(next.constraints.iter().all(|c| c.value(&out.z) < 1e-8));
        }
    }

    #[test]
    fn auxiliary_constraints_are_active() {
        let (r_h, r_g) = aligned(8);
        let cfg = SystemConfig::default();
        let (design, state, trace) = algorithm3(&r_h, &r_g, &cfg, &SolverSettings::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.points.windows(2).all(|p| p[1].objective <= p[0].objective));
        let gp_value: f64 = cfg.omega1 / 4.0 * state.kappa_com.iter().map(|k| 1.0 / k).sum::<f64>()
            + cfg.omega2() / 8.0 * state.kappa_rad.iter().map(|k| 1.0 / k).sum::<f64>();
        assert!((gp_value - design.objective).abs() < 1e-12);
        assert!(state.x.iter().sum::<f64>() <= cfg.p_ce && state.w.iter().sum::<f64>() <= cfg.p_dt);
        assert!((state.x.iter().sum::<f64>() - cfg.p_ce).abs() < 1e-6 * cfg.p_ce);
        assert!((state.w.iter().sum::<f64>() - cfg.p_dt).abs() < 1e-6 * cfg.p_dt);
    }

    #[test]
    fn two_antenna_grid() {
        let r_h = CorrelationMatrix::from_eigen(&CMat::identity(2, 2), &[1.5, 0.5]).unwrap();
        let r_g = CorrelationMatrix::from_eigen(&CMat::identity(2, 2), &[0.8, 1.2]).unwrap();
        let cfg = SystemConfig { m: 2, n_com: 2, n_rad: 2, d: 1, l: 34, l_ce: 2, p_ce: 2.0, p_dt: 1.0, ..Default::default() };
        let (design, _, _) = algorithm3(&r_h, &r_g, &cfg, &SolverSettings::default()).unwrap();
        let basis = joint_eigenbasis(r_h.matrix(), r_g.matrix(), 1e-8).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=100 {
            for j in 0..=100 {
                let x1 = cfg.p_ce * i as f64 / 100.0;
                let x = [x1, cfg.p_ce - x1];
                let w = [cfg.p_dt * j as f64 / 100.0];
                best = best.min(power_allocation_objective(&basis.first, &basis.second, &x, &w, &cfg));
            }
        }
        assert!(design.objective <= best + 1e-9 && design.objective >= best - 1e-3, "{} vs {best}", design.objective);
    }

    #[test]
    fn misaligned_correlations_rejected() {
        let r_h = exponential_correlation(4, 0.5).unwrap();
        let mut g = CMat::identity(4, 4);
        g[(0, 2)] = C64::new(0.0, 0.2);
        g[(2, 0)] = C64::new(0.0, -0.2);
        let r_g2 = CorrelationMatrix::new(HermitianMatrix::new(g).unwrap()).unwrap();
        let err = algorithm3(&r_h, &r_g2, &SystemConfig { m: 4, n_rad: 4, d: 2, l_ce: 4, l: 36, ..Default::default() }, &SolverSettings::default());
        assert!(matches!(err, Err(IsacError::MisalignedCorrelations(_))));
    }
}
