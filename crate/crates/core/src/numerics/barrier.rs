use nalgebra::{DMatrix, DVector};

use super::{is_cancelled, CancelToken};
use crate::error::{IsacError, Result};

/// `coeff · exp(aᵀz + offset)` with `coeff > 0` and sparse `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpTerm {
    pub coeff: f64,
    pub exponent: Vec<(usize, f64)>,
    pub offset: f64,
}

impl ExpTerm {
    pub fn new(coeff: f64, exponent: &[(usize, f64)], offset: f64) -> Self {
        Self {
            coeff,
            exponent: exponent.to_vec(),
            offset,
        }
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        let arg: f64 = self.exponent.iter().map(|&(i, a)| a * z[i]).sum::<f64>() + self.offset;
        self.coeff * arg.exp()
    }
}

/// `Σ ExpTerm + lᵀz + constant`. Convex whenever every coefficient is positive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpAffine {
    pub terms: Vec<ExpTerm>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
}

impl ExpAffine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, coeff: f64, exponent: &[(usize, f64)], offset: f64) -> Self {
        self.terms.push(ExpTerm::new(coeff, exponent, offset));
        self
    }

    pub fn linear(mut self, index: usize, weight: f64) -> Self {
        self.linear.push((index, weight));
        self
    }

    pub fn constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        let exp: f64 = self.terms.iter().map(|t| t.value(z)).sum();
        let lin: f64 = self.linear.iter().map(|&(i, w)| w * z[i]).sum();
        exp + lin + self.constant
    }

    fn gradient(&self, z: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for t in &self.terms {
            let v = t.value(z);
            for &(i, a) in &t.exponent {
                out[i] += v * a;
            }
        }
        for &(i, w) in &self.linear {
            out[i] += w;
        }
    }

    /// Gradient as `(index, value)` pairs with one entry per index.
    fn sparse_gradient(&self, z: &DVector<f64>, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let mut push = |i: usize, v: f64| match out.iter_mut().find(|e| e.0 == i) {
            Some(e) => e.1 += v,
            None => out.push((i, v)),
        };
        for t in &self.terms {
            let v = t.value(z);
            for &(i, a) in &t.exponent {
                push(i, v * a);
            }
        }
        for &(i, w) in &self.linear {
            push(i, w);
        }
    }

    /// Adds `scale · ∇²` into `h`.
    fn add_hessian(&self, z: &DVector<f64>, scale: f64, h: &mut DMatrix<f64>) {
        for t in &self.terms {
            let v = scale * t.value(z);
            for &(i, a) in &t.exponent {
                for &(j, b) in &t.exponent {
                    h[(i, j)] += v * a * b;
                }
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        for t in &self.terms {
            if !(t.coeff > 0.0) || !t.offset.is_finite() {
                return Err(IsacError::invalid("exponential terms need positive coefficients"));
            }
            if t.exponent.iter().any(|&(i, a)| i >= dim || !a.is_finite()) {
                return Err(IsacError::invalid("exponent index out of range"));
            }
        }
        if self.linear.iter().any(|&(i, w)| i >= dim || !w.is_finite()) {
            return Err(IsacError::invalid("linear index out of range"));
        }
        Ok(())
    }
}

/// Minimize `objective(z)` subject to `constraint_i(z) ≤ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexProgram {
    pub dim: usize,
    pub objective: ExpAffine,
    pub constraints: Vec<ExpAffine>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierSettings {
    pub initial_t: f64,
    /// Growth factor of the barrier weight per outer step.
    pub growth: f64,
    /// Target duality gap `m / t`.
    pub gap_tol: f64,
    /// Half squared Newton decrement that ends a centering step.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
    pub armijo: f64,
    pub shrink: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            initial_t: 1.0,
            growth: 10.0,
            gap_tol: 1e-10,
            newton_tol: 1e-12,
            max_newton: 200,
            max_outer: 60,
            armijo: 0.25,
            shrink: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BarrierOutcome {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Dual estimates `1 / (−t f_i)` at the final center.
    pub multipliers: Vec<f64>,
    /// Max of stationarity and complementary-slackness residuals.
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

impl ConvexProgram {
    fn barrier(&self, z: &DVector<f64>, t: f64) -> Option<f64> {
        let mut phi = t * self.objective.value(z);
        for c in &self.constraints {
            let v = c.value(z);
            if !(v < 0.0) {
                return None;
            }
            phi -= (-v).ln();
        }
        phi.is_finite().then_some(phi)
    }

    fn derivatives(&self, z: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let mut sparse = Vec::new();
        self.objective.sparse_gradient(z, &mut sparse);
        for &(i, v) in &sparse {
            g[i] += t * v;
        }
        self.objective.add_hessian(z, t, &mut h);
        for c in &self.constraints {
            let v = c.value(z);
            c.sparse_gradient(z, &mut sparse);
            for &(i, a) in &sparse {
                g[i] -= a / v;
                for &(j, b) in &sparse {
                    h[(i, j)] += a * b / (v * v);
                }
            }
            c.add_hessian(z, -1.0 / v, &mut h);
        }
        (g, h)
    }

    fn kkt(&self, z: &DVector<f64>, multipliers: &[f64]) -> f64 {
        let n = self.dim;
        let mut stat = DVector::zeros(n);
        let mut scratch = DVector::zeros(n);
        self.objective.gradient(z, &mut stat);
        let mut slack: f64 = 0.0;
        for (c, &lam) in self.constraints.iter().zip(multipliers) {
            c.gradient(z, &mut scratch);
            stat.axpy(lam, &scratch, 1.0);
            slack = slack.max((lam * c.value(z)).abs());
        }
        stat.amax().max(slack)
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut reg = h.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += shift;
        }
        if let Some(chol) = reg.cholesky() {
            let d = chol.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
    None
}

/// Log-barrier interior point method with Newton centering.
///
/// Solves `min f₀(z)` s.t. `f_i(z) ≤ 0` from a strictly feasible `start`,
/// multiplying the barrier weight by `growth` until `m / t ≤ gap_tol`.
pub fn barrier_newton(
    program: &ConvexProgram,
    start: DVector<f64>,
    settings: &BarrierSettings,
    cancel: &Option<CancelToken>,
) -> Result<BarrierOutcome> {
    if start.len() != program.dim {
        return Err(IsacError::invalid(format!(
            "start has length {}, program has {} variables",
            start.len(),
            program.dim
        )));
    }
    program.objective.validate(program.dim)?;
    for c in &program.constraints {
        c.validate(program.dim)?;
    }
    if let Some((i, v)) = program
        .constraints
        .iter()
        .map(|c| c.value(&start))
        .enumerate()
        .find(|(_, v)| !(*v < 0.0))
    {
        return Err(IsacError::InfeasibleStart(format!("constraint {i} evaluates to {v:e} at the start")));
    }

    let m = program.constraints.len() as f64;
    let mut z = start;
    let mut t = settings.initial_t;
    let mut newton_steps = 0;
    for _ in 0..settings.max_outer {
        let mut centered = false;
        for _ in 0..settings.max_newton {
            if is_cancelled(cancel) {
                return Err(IsacError::Cancelled { iterations: newton_steps });
            }
            let phi = program
                .barrier(&z, t)
                .ok_or_else(|| IsacError::numerical("barrier iterate left the feasible region"))?;
            let (g, h) = program.derivatives(&z, t);
            let d = newton_direction(&g, &h)
                .ok_or_else(|| IsacError::numerical("Newton system could not be solved"))?;
            let slope = g.dot(&d);
            if -slope / 2.0 <= settings.newton_tol {
                centered = true;
                break;
            }
            let mut s = 1.0;
            let mut moved = false;
            for _ in 0..200 {
                let candidate = &z + &d * s;
                if let Some(pc) = program.barrier(&candidate, t) {
                    // Inside the quadratic region a full step is taken even when
                    // the decrease is hidden by rounding in the barrier value.
                    if pc <= phi + settings.armijo * s * slope || (s == 1.0 && -slope < 0.25) {
                        moved = true;
                        break;
                    }
                }
                s *= settings.shrink;
            }
            newton_steps += 1;
            let step = &d * s;
            let stalled = step.amax() <= 1e-15 * z.amax().max(1.0);
            if !moved || stalled {
                // Progress is at rounding level; the center is as good as it gets.
                centered = true;
                break;
            }
            z += step;
        }
        if !centered {
            return Err(IsacError::numerical(format!(
                "Newton centering did not converge at barrier weight {t:e}"
            )));
        }
        if m / t <= settings.gap_tol {
            break;
        }
        t *= settings.growth;
    }

    let multipliers: Vec<f64> = program
        .constraints
        .iter()
        .map(|c| 1.0 / (-t * c.value(&z)))
        .collect();
    let kkt_residual = program.kkt(&z, &multipliers);
    let objective = program.objective.value(&z);
    if !objective.is_finite() {
        return Err(IsacError::numerical("barrier objective is non-finite"));
    }
    Ok(BarrierOutcome {
        z,
        objective,
        multipliers,
        kkt_residual,
        newton_steps,
    })
}
