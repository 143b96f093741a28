use proptest::prelude::*;

use crate::beamforming::{algorithm1, BeamformingProblem};
use crate::design::Scheme;
use crate::experiments::{approx_csv, scheme_trials, ApproxRow, ExperimentConfig};
use crate::metrics::{mse_ce, mse_rad_approx};
use crate::model::{
    error_covariance, exponential_correlation, lmmse_channel_estimate, CorrelationMatrix, SystemConfig, TrainingSignal,
    TrialRng,
};
use crate::numerics::testing::{random_hermitian, random_matrix, random_spd};
use crate::numerics::{bisect, evd, identity, power, psd_project, HermitianMatrix};
use crate::SolverSettings;

fn relative(a: &nalgebra::DMatrix<crate::numerics::C64>, b: &nalgebra::DMatrix<crate::numerics::C64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn correlation(n: usize, seed: u64) -> CorrelationMatrix {
    let raw = random_spd(n, seed, 0.1);
    let scaled = raw.scale(n as f64 / raw.trace());
    CorrelationMatrix::new(scaled).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_idempotent_and_feasible(n in 2usize..8, seed in any::<u64>(), budget in 0.1f64..20.0) {
        let a = random_hermitian(n, seed).scale(5.0);
        let once = psd_project(&a, budget).unwrap();
        let twice = psd_project(&once, budget).unwrap();
        prop_assert!((twice.matrix() - once.matrix()).norm() < 1e-12 * (1.0 + once.matrix().norm()));
        prop_assert!(once.trace() <= budget * (1.0 + 1e-12));
        prop_assert!(once.lambda_min().unwrap() >= -1e-12 * budget);
    }

    #[test]
    fn eigendecomposition_reconstructs(n in 1usize..10, seed in any::<u64>()) {
        let a = random_hermitian(n, seed);
        let e = evd(&a).unwrap();
        prop_assert!(relative(e.reconstruct().matrix(), a.matrix()) < 1e-9);
        prop_assert!((e.basis.adjoint() * &e.basis - identity(n)).norm() < 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn bisection_is_deterministic(a in 0.1f64..5.0, target in -50.0f64..50.0) {
        let f = |x: f64| x * x * x + a * x;
        let r1 = bisect(f, target, -10.0, 10.0, 1e-13).unwrap();
        let r2 = bisect(f, target, 10.0, -10.0, 1e-13).unwrap();
        prop_assert_eq!(r1.to_bits(), r2.to_bits());
        prop_assert!((f(r1) - target).abs() < 1e-9 * (1.0 + target.abs()));
    }

    #[test]
    fn estimate_and_error_partition_the_channel(m in 2usize..7, l_extra in 0usize..4, seed in any::<u64>(), sigma2 in 0.1f64..3.0) {
        let r_h = correlation(m, seed);
        let x = random_matrix(m, m + l_extra, seed ^ 0x5a5a);
        let budget = power(&x);
        let training = TrainingSignal::new(x, budget * (1.0 + 1e-9)).unwrap();
        let mut rng = TrialRng::new(seed);
        let h = rng.channel(&r_h, 3);
        let y = &h * training.matrix() + rng.noise(3, m + l_extra, sigma2);
        let est = lmmse_channel_estimate(&y, &training, &r_h, sigma2).unwrap();
        let recomputed = error_covariance(&r_h, training.gram(), sigma2).unwrap();
        prop_assert_eq!(est.r_delta.matrix(), recomputed.matrix());
        prop_assert!((est.r_hhat.add(&est.r_delta).matrix() - r_h.matrix().matrix()).norm() < 1e-12 * m as f64);
        prop_assert!(est.r_delta.lambda_min().unwrap() >= -1e-12);
        prop_assert!(est.r_hhat.lambda_min().unwrap() >= -1e-9);
    }

    #[test]
    fn more_training_energy_never_hurts(m in 2usize..7, seed in any::<u64>(), l_dt in 1usize..40) {
        let r_h = correlation(m, seed);
        let r_g = correlation(m, seed.wrapping_add(1));
        let gram = HermitianMatrix::gram(&random_matrix(m, m, seed ^ 1));
        let extra = HermitianMatrix::gram(&random_matrix(m, 2, seed ^ 2));
        let w = random_matrix(m, 2, seed ^ 3);
        let more = gram.add(&extra);
        prop_assert!(mse_ce(&r_h, &more, 1.0).unwrap() <= mse_ce(&r_h, &gram, 1.0).unwrap() * (1.0 + 1e-12));
        prop_assert!(
            mse_rad_approx(&r_g, &more, &w, l_dt, 1.0).unwrap() <= mse_rad_approx(&r_g, &gram, &w, l_dt, 1.0).unwrap() * (1.0 + 1e-12)
        );
    }

    #[test]
    fn estimation_error_is_scale_free(m in 2usize..7, seed in any::<u64>(), c in 0.05f64..20.0, sigma2 in 0.1f64..3.0) {
        let r_h = correlation(m, seed);
        let x = random_matrix(m, m, seed ^ 7);
        let a = mse_ce(&r_h, &HermitianMatrix::gram(&x), sigma2).unwrap();
        let b = mse_ce(&r_h, &HermitianMatrix::gram(&x.scale(c)), c * c * sigma2).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn beamforming_never_ascends(seed in any::<u64>(), omega1 in 0.0f64..=1.0, p_dt in 0.5f64..16.0) {
        let config = SystemConfig { omega1, p_dt, ..SystemConfig::default() };
        let r_h = exponential_correlation(config.m, 0.5).unwrap();
        let r_g = CorrelationMatrix::identity(config.m);
        let training = TrainingSignal::new(random_matrix(config.m, config.l_ce, seed), f64::INFINITY).unwrap();
        let mut rng = TrialRng::new(seed);
        let h = rng.channel(&r_h, config.n_com);
        let y = &h * training.matrix() + rng.noise(config.n_com, config.l_ce, config.sigma2);
        let est = lmmse_channel_estimate(&y, &training, &r_h, config.sigma2).unwrap();
        let problem = BeamformingProblem::new(est.h_hat, est.r_delta, &r_g, training.gram(), &config).unwrap();
        let (w, trace) = algorithm1(&problem, None, &SolverSettings::default()).unwrap();
        prop_assert!(trace.objectives.windows(2).all(|p| p[1] <= p[0] + 1e-12));
        prop_assert!(power(&w) <= p_dt * (1.0 + 1e-9));
    }

    #[test]
    fn approximation_table_round_trips(values in proptest::collection::vec((1usize..200, any::<f64>(), any::<f64>(), 1usize..100_000), 1..8)) {
        let rows: Vec<ApproxRow> = values
            .iter()
            .map(|&(l_dt, a, b, trials)| ApproxRow { l_dt, mse_rad_exact: a, mse_rad_approx: b, rel_gap: a - b, trials })
            .filter(|r| r.mse_rad_exact.is_finite() && r.mse_rad_approx.is_finite() && r.rel_gap.is_finite())
            .collect();
        let text = approx_csv(&rows);
        let parsed: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
        prop_assert_eq!(parsed.len(), rows.len());
        for (r, p) in rows.iter().zip(&parsed) {
            prop_assert_eq!(p[0].parse::<usize>().unwrap(), r.l_dt);
            prop_assert_eq!(p[1].parse::<f64>().unwrap().to_bits(), r.mse_rad_exact.to_bits());
            prop_assert_eq!(p[2].parse::<f64>().unwrap().to_bits(), r.mse_rad_approx.to_bits());
            prop_assert_eq!(p[3].parse::<f64>().unwrap().to_bits(), r.rel_gap.to_bits());
            prop_assert_eq!(p[4].parse::<usize>().unwrap(), r.trials);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn adding_trials_keeps_earlier_ones(seed in any::<u64>(), short in 1usize..6, extra in 1usize..6) {
        let exp = ExperimentConfig { seed, ..ExperimentConfig::default() };
        let point = exp.points()[0];
        let (_, a) = scheme_trials(&exp, Scheme::Sequential, &point, short).unwrap();
        let (_, b) = scheme_trials(&exp, Scheme::Sequential, &point, short + extra).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.mse_com.to_bits(), y.mse_com.to_bits());
            prop_assert_eq!(x.mse_rad_exact.to_bits(), y.mse_rad_exact.to_bits());
            prop_assert_eq!(x.channel_error.to_bits(), y.channel_error.to_bits());
        }
    }
}

#[test]
fn estimate_is_uncorrelated_with_its_error() {
    let r_h = exponential_correlation(4, 0.7).unwrap();
    let training = TrainingSignal::new(random_matrix(4, 4, 11), f64::INFINITY).unwrap();
    let trials = 10_000;
    let (mut cross, mut hh, mut dd) = (crate::numerics::C64::new(0.0, 0.0), 0.0, 0.0);
    let mut products = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = TrialRng::for_trial(91, t as u64);
        let h = rng.channel(&r_h, 2);
        let y = &h * training.matrix() + rng.noise(2, 4, 1.0);
        let est = lmmse_channel_estimate(&y, &training, &r_h, 1.0).unwrap();
        let delta = &h - &est.h_hat;
        let p = est.h_hat.dotc(&delta);
        products.push(p.re);
        cross += p;
        hh += est.h_hat.norm_squared();
        dd += delta.norm_squared();
    }
    let n = trials as f64;
    let mean = cross.re / n;
    let sd = (products.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
    assert!(cross.norm() / (hh * dd).sqrt() < 0.05);
}
