use super::{all_finite, is_cancelled, real_inner, CMat, CancelToken};
use crate::error::{IsacError, Result};

/// Vector-space operations the projected gradient loop needs.
pub trait Iterate: Clone {
    /// `self + alpha · dir`.
    fn axpy(&self, alpha: f64, dir: &Self) -> Self;
    fn inner(&self, other: &Self) -> f64;
    fn is_finite(&self) -> bool;
    /// A single matrix to attach to numerical-failure errors.
    fn snapshot(&self) -> CMat;

    fn distance_sq(&self, other: &Self) -> f64 {
        let d = self.axpy(-1.0, other);
        d.inner(&d)
    }
}

impl Iterate for CMat {
    fn axpy(&self, alpha: f64, dir: &Self) -> Self {
        self + dir.scale(alpha)
    }

    fn inner(&self, other: &Self) -> f64 {
        real_inner(self, other)
    }

    fn is_finite(&self) -> bool {
        all_finite(self)
    }

    fn snapshot(&self) -> CMat {
        self.clone()
    }
}

impl Iterate for (CMat, CMat) {
    fn axpy(&self, alpha: f64, dir: &Self) -> Self {
        (&self.0 + dir.0.scale(alpha), &self.1 + dir.1.scale(alpha))
    }

    fn inner(&self, other: &Self) -> f64 {
        real_inner(&self.0, &other.0) + real_inner(&self.1, &other.1)
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.0) && all_finite(&self.1)
    }

    fn snapshot(&self) -> CMat {
        self.0.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgdSettings {
    pub max_iterations: usize,
    /// Relative objective change that counts as converged.
    pub rel_tol: f64,
    /// Norm of `x − P(x − ∇f)` that counts as converged.
    pub pg_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub slope: f64,
    /// Start each line search from the Barzilai-Borwein step instead of `initial_step`.
    pub spectral_step: bool,
    pub max_backtracks: usize,
}

impl Default for PgdSettings {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            rel_tol: 1e-8,
            pg_tol: 1e-7,
            initial_step: 1.0,
            shrink: 0.5,
            slope: 1e-4,
            spectral_step: true,
            max_backtracks: 80,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PgdOutcome<T> {
    pub x: T,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the start value.
    pub trace: Vec<f64>,
}

fn check_value<T: Iterate>(v: f64, x: &T, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IsacError::numerical_at(format!("non-finite {what} in projected gradient"), &x.snapshot()))
    }
}

/// Projected gradient descent with Armijo backtracking along the projection arc.
///
/// The start is projected first. Every accepted step satisfies
/// `f(x⁺) ≤ f(x) + slope·⟨∇f(x), x⁺ − x⟩`, so the objective never increases.
/// Hitting the iteration cap returns the last iterate with `converged = false`.
pub fn pgd_minimize<T: Iterate>(
    objective: impl Fn(&T) -> Result<f64>,
    gradient: impl Fn(&T) -> Result<T>,
    project: impl Fn(&T) -> Result<T>,
    start: T,
    settings: &PgdSettings,
    cancel: &Option<CancelToken>,
) -> Result<PgdOutcome<T>> {
    let mut x = project(&start)?;
    let mut f = check_value(objective(&x)?, &x, "objective")?;
    let mut g = gradient(&x)?;
    if !g.is_finite() {
        return Err(IsacError::numerical_at("non-finite gradient in projected gradient", &x.snapshot()));
    }
    let mut trace = vec![f];
    let mut step = settings.initial_step;
    let mut previous: Option<(T, T)> = None;

    for iteration in 0..settings.max_iterations {
        if is_cancelled(cancel) {
            return Err(IsacError::Cancelled { iterations: iteration });
        }
        let pg = project(&x.axpy(-1.0, &g))?;
        if pg.distance_sq(&x).sqrt() < settings.pg_tol {
            return Ok(PgdOutcome { x, objective: f, iterations: iteration, converged: true, trace });
        }

        if settings.spectral_step {
            if let Some((x_prev, g_prev)) = &previous {
                let s = x.axpy(-1.0, x_prev);
                let y = g.axpy(-1.0, g_prev);
                let sy = s.inner(&y);
                if sy > 0.0 {
                    step = (s.inner(&s) / sy).clamp(1e-12, 1e12);
                }
            }
        }

        let mut t = step;
        let mut accepted = None;
        for _ in 0..settings.max_backtracks {
            let candidate = project(&x.axpy(-t, &g))?;
            let fc = check_value(objective(&candidate)?, &candidate, "objective")?;
            let decrease = g.inner(&candidate.axpy(-1.0, &x));
            if fc <= f + settings.slope * decrease {
                accepted = Some((candidate, fc));
                break;
            }
            t *= settings.shrink;
        }
        let Some((x_new, f_new)) = accepted else {
            // No representable step decreases the objective: numerically stationary.
            return Ok(PgdOutcome { x, objective: f, iterations: iteration, converged: true, trace });
        };
        if !settings.spectral_step {
            step = settings.initial_step;
        }
        let g_new = gradient(&x_new)?;
        if !g_new.is_finite() {
            return Err(IsacError::numerical_at("non-finite gradient in projected gradient", &x_new.snapshot()));
        }
        let change = (f - f_new).abs() / f.abs().max(f64::MIN_POSITIVE);
        previous = Some((std::mem::replace(&mut x, x_new), std::mem::replace(&mut g, g_new)));
        f = f_new;
        trace.push(f);
        if change < settings.rel_tol {
            return Ok(PgdOutcome { x, objective: f, iterations: iteration + 1, converged: true, trace });
        }
    }
    Ok(PgdOutcome { x, objective: f, iterations: settings.max_iterations, converged: false, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::testing::random_hermitian;
    use crate::numerics::{psd_project, HermitianMatrix};

    fn projector(budget: f64) -> impl Fn(&CMat) -> Result<CMat> {
        move |x: &CMat| Ok(psd_project(&HermitianMatrix::new(x.clone())?, budget)?.into_matrix())
    }

    #[test]
    fn quadratic_recovers_projection() {
        for spectral in [false, true] {
            let a = random_hermitian(5, 11);
            let target = a.matrix().clone();
            let settings = PgdSettings { spectral_step: spectral, ..Default::default() };
            let out = pgd_minimize(
                |x: &CMat| Ok((x - &target).norm_squared()),
                |x: &CMat| Ok((x - &target).scale(2.0)),
                projector(1.5),
                CMat::zeros(5, 5),
                &settings,
                &None,
            )
            .unwrap();
            let expected = psd_project(&a, 1.5).unwrap();
            assert!((out.x - expected.matrix()).norm() < 1e-6);
            assert!(out.converged);
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let a = random_hermitian(4, 3);
        let target = a.matrix().clone();
        let out = pgd_minimize(
            |x: &CMat| Ok((x - &target).norm_squared().powi(2)),
            |x: &CMat| Ok((x - &target).scale(4.0 * (x - &target).norm_squared())),
            projector(2.0),
            CMat::identity(4, 4),
            &PgdSettings::default(),
            &None,
        )
        .unwrap();
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let err = pgd_minimize(
            |_: &CMat| Ok(f64::NAN),
            |x: &CMat| Ok(x.clone()),
            |x: &CMat| Ok(x.clone()),
            CMat::identity(2, 2),
            &PgdSettings::default(),
            &None,
        )
        .unwrap_err();
        assert!(matches!(err, IsacError::Numerical { snapshot: Some(_), .. }));
    }

    #[test]
    fn cancellation_stops_the_loop() {
        let token = CancelToken::new();
        token.cancel();
        let target = random_hermitian(3, 1).into_matrix();
        let err = pgd_minimize(
            |x: &CMat| Ok((x - &target).norm_squared()),
            |x: &CMat| Ok((x - &target).scale(2.0)),
            projector(1.0),
            CMat::zeros(3, 3),
            &PgdSettings::default(),
            &Some(token),
        )
        .unwrap_err();
        assert!(matches!(err, IsacError::Cancelled { .. }));
    }
}
