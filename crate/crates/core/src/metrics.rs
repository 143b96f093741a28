//! Closed-form MSE and mutual-information metrics and the MMSE receiver.
//!
//! The communication metrics are normalized by the stream count `D` and the
//! sensing metrics by `M`, as in the design objectives. [`mse_ce`] returns the
//! raw trace; [`MetricReport`] stores it divided by `M`.

use crate::error::Result;
use crate::model::CorrelationMatrix;
use crate::numerics::{real_inner, CMat, HermitianMatrix};

/// Normalized metrics of one design. Fields a scheme does not evaluate stay `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub mse_ce: Option<f64>,
    pub mse_com: Option<f64>,
    pub mse_com_avg: Option<f64>,
    pub mse_rad_exact: Option<f64>,
    pub mse_rad_approx: Option<f64>,
    pub mi_ce: Option<f64>,
    pub mi_com: Option<f64>,
    pub mi_com_avg: Option<f64>,
    pub mi_rad: Option<f64>,
}

/// `Tr(W Wᴴ R_Δ) + σ²`, the noise seen by the receiver including estimation error.
pub fn effective_noise(w: &CMat, r_delta: &HermitianMatrix, sigma2: f64) -> f64 {
    real_inner(w, &(r_delta.matrix() * w)) + sigma2
}

/// `Tr{(R⁻¹ + XXᴴ/σ²)⁻¹}`, not normalized.
pub fn mse_ce(r_h: &CorrelationMatrix, gram: &HermitianMatrix, sigma2: f64) -> Result<f64> {
    r_h.inverse()?.add(&gram.scale(1.0 / sigma2)).trace_inverse()
}

fn com_information(channel_gram: &HermitianMatrix, w: &CMat, r_delta: &HermitianMatrix, sigma2: f64) -> HermitianMatrix {
    let kappa = effective_noise(w, r_delta, sigma2);
    HermitianMatrix::from_raw(w.adjoint() * channel_gram.matrix() * w)
        .scale(1.0 / kappa)
        .add_identity(1.0)
}

/// `V* = (ĤWWᴴĤᴴ + (Tr{WWᴴR_Δ} + σ²) I)⁻¹ ĤW`.
pub fn mmse_receiver(h_hat: &CMat, w: &CMat, r_delta: &HermitianMatrix, sigma2: f64) -> Result<CMat> {
    let hw = h_hat * w;
    let q = HermitianMatrix::gram(&hw).add_identity(effective_noise(w, r_delta, sigma2));
    q.solve(&hw)
}

/// Expected data MSE for an arbitrary receiver `V`, normalized by `D`.
pub fn mse_com_with_receiver(v: &CMat, h_hat: &CMat, w: &CMat, r_delta: &HermitianMatrix, sigma2: f64) -> f64 {
    let hw = h_hat * w;
    let d = w.ncols() as f64;
    let kappa = effective_noise(w, r_delta, sigma2);
    let vh_hw = v.adjoint() * &hw;
    let quad = vh_hw.norm_squared() + kappa * v.norm_squared();
    let cross = (0..vh_hw.nrows()).map(|i| vh_hw[(i, i)].re).sum::<f64>();
    (quad - 2.0 * cross + d) / d
}

/// Data MSE with the MMSE receiver, normalized by `D`.
pub fn mse_com(h_hat: &CMat, w: &CMat, r_delta: &HermitianMatrix, sigma2: f64) -> Result<f64> {
    let gram = HermitianMatrix::from_raw(h_hat.adjoint() * h_hat);
    Ok(com_information(&gram, w, r_delta, sigma2).trace_inverse()? / w.ncols() as f64)
}

/// Lower bound on the mean of [`mse_com`] over channel estimates, normalized by `D`.
pub fn mse_com_avg(r_hhat: &HermitianMatrix, w: &CMat, r_delta: &HermitianMatrix, sigma2: f64, n_com: usize) -> Result<f64> {
    let gram = r_hhat.scale(n_com as f64);
    Ok(com_information(&gram, w, r_delta, sigma2).trace_inverse()? / w.ncols() as f64)
}

/// `R_G⁻¹ + E/σ²` for illumination energy `E`.
pub fn sensing_information(r_g: &CorrelationMatrix, energy: &HermitianMatrix, sigma2: f64) -> Result<HermitianMatrix> {
    Ok(r_g.inverse()?.add(&energy.scale(1.0 / sigma2)))
}

/// `XXᴴ + L_DT·WWᴴ`.
pub fn approximate_energy(gram: &HermitianMatrix, w: &CMat, l_dt: usize) -> HermitianMatrix {
    gram.add(&HermitianMatrix::gram(w).scale(l_dt as f64))
}

/// `XXᴴ + W S Sᴴ Wᴴ`.
pub fn exact_energy(gram: &HermitianMatrix, w: &CMat, s: &CMat) -> HermitianMatrix {
    gram.add(&HermitianMatrix::gram(&(w * s)))
}

/// Target estimation MSE with `SSᴴ ≈ L_DT·I`, normalized by `M`.
pub fn mse_rad_approx(r_g: &CorrelationMatrix, gram: &HermitianMatrix, w: &CMat, l_dt: usize, sigma2: f64) -> Result<f64> {
    let a = sensing_information(r_g, &approximate_energy(gram, w, l_dt), sigma2)?;
    Ok(a.trace_inverse()? / r_g.dim() as f64)
}

/// Target estimation MSE for realized symbols `S`, normalized by `M`.
pub fn mse_rad_exact(r_g: &CorrelationMatrix, gram: &HermitianMatrix, w: &CMat, s: &CMat, sigma2: f64) -> Result<f64> {
    let a = sensing_information(r_g, &exact_energy(gram, w, s), sigma2)?;
    Ok(a.trace_inverse()? / r_g.dim() as f64)
}

/// `log det(I + R E/σ²)` through the Hermitian form `I + R^{1/2} E R^{1/2}/σ²`.
fn information_logdet(r: &CorrelationMatrix, energy: &HermitianMatrix, sigma2: f64) -> Result<f64> {
    let s = r.sqrt().matrix();
    HermitianMatrix::from_raw(s * energy.matrix() * s)
        .scale(1.0 / sigma2)
        .add_identity(1.0)
        .logdet()
}

/// Channel-estimation MI in nats, normalized by `M`.
pub fn mi_ce(r_h: &CorrelationMatrix, gram: &HermitianMatrix, sigma2: f64) -> Result<f64> {
    Ok(information_logdet(r_h, gram, sigma2)? / r_h.dim() as f64)
}

/// Data MI for the estimated channel, normalized by `D`.
pub fn mi_com(h_hat: &CMat, w: &CMat, r_delta: &HermitianMatrix, sigma2: f64) -> Result<f64> {
    let gram = HermitianMatrix::from_raw(h_hat.adjoint() * h_hat);
    Ok(com_information(&gram, w, r_delta, sigma2).logdet()? / w.ncols() as f64)
}

/// Data MI with the estimate Gram replaced by its mean, normalized by `D`.
pub fn mi_com_avg(r_hhat: &HermitianMatrix, w: &CMat, r_delta: &HermitianMatrix, sigma2: f64, n_com: usize) -> Result<f64> {
    let gram = r_hhat.scale(n_com as f64);
    Ok(com_information(&gram, w, r_delta, sigma2).logdet()? / w.ncols() as f64)
}

/// Sensing MI with `SSᴴ ≈ L_DT·I`, normalized by `M`.
pub fn mi_rad(r_g: &CorrelationMatrix, gram: &HermitianMatrix, w: &CMat, l_dt: usize, sigma2: f64) -> Result<f64> {
    Ok(information_logdet(r_g, &approximate_energy(gram, w, l_dt), sigma2)? / r_g.dim() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exponential_correlation;
    use crate::numerics::testing::{random_matrix, random_spd};
    use crate::numerics::{identity, C64};

    fn zero_delta(m: usize) -> HermitianMatrix {
        HermitianMatrix::zeros(m)
    }

    #[test]
    fn mse_ce_cases() {
        let r = CorrelationMatrix::identity(2);
        assert!((mse_ce(&r, &HermitianMatrix::zeros(2), 1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((mse_ce(&r, &HermitianMatrix::identity(2), 1.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mse_ce_scaling_invariance() {
        let r = exponential_correlation(4, 0.6).unwrap();
        let x = random_matrix(4, 4, 1);
        let c: f64 = 3.0;
        let a = mse_ce(&r, &HermitianMatrix::gram(&x), 0.7).unwrap();
        let b = mse_ce(&r, &HermitianMatrix::gram(&x.scale(c)), 0.7 * c * c).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_beamformer() {
        let h = random_matrix(3, 4, 2);
        let w = CMat::zeros(4, 2);
        let v = mmse_receiver(&h, &w, &zero_delta(4), 1.0).unwrap();
        assert!(v.norm() == 0.0);
        assert!((mse_com(&h, &w, &zero_delta(4), 1.0).unwrap() - 1.0).abs() < 1e-15);
        let rh = random_spd(4, 3, 0.1);
        assert!((mse_com_avg(&rh, &w, &zero_delta(4), 1.0, 3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decoupled_streams() {
        let p: f64 = 2.5;
        let w = identity(3).scale(p.sqrt());
        let v = mse_com(&identity(3), &w, &zero_delta(3), 1.0).unwrap();
        assert!((v - 1.0 / (1.0 + p)).abs() < 1e-14);
    }

    #[test]
    fn receiver_substitution_reproduces_closed_form() {
        for seed in 0..10 {
            let h = random_matrix(4, 6, seed);
            let w = random_matrix(6, 3, 100 + seed);
            let rd = random_spd(6, 200 + seed, 0.05).scale(0.1);
            let v = mmse_receiver(&h, &w, &rd, 0.8).unwrap();
            let direct = mse_com(&h, &w, &rd, 0.8).unwrap();
            let via = mse_com_with_receiver(&v, &h, &w, &rd, 0.8);
            assert!((direct - via).abs() < 1e-10, "{direct} vs {via}");
            for k in 0..20 {
                let e = random_matrix(4, 3, 1000 * seed + k).scale(0.1);
                assert!(mse_com_with_receiver(&(&v + e), &h, &w, &rd, 0.8) >= via - 1e-12);
            }
        }
    }

    #[test]
    fn rank_one_average() {
        // R_Ĥ = a·eeᴴ, D = 1, w = √p e: (1 + N a p / (p δ + σ²))⁻¹ with R_Δ = δ I.
        let (a, p, delta, n): (f64, f64, f64, usize) = (0.7, 2.0, 0.3, 4);
        let mut e = CMat::zeros(3, 1);
        e[(0, 0)] = C64::new(1.0, 0.0);
        let r_hhat = HermitianMatrix::gram(&e).scale(a);
        let w = e.scale(p.sqrt());
        let rd = HermitianMatrix::identity(3).scale(delta);
        let v = mse_com_avg(&r_hhat, &w, &rd, 1.0, n).unwrap();
        let expected = 1.0 / (1.0 + n as f64 * a * p / (p * delta + 1.0));
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn sensing_cases() {
        let r = CorrelationMatrix::identity(4);
        let zero = HermitianMatrix::zeros(4);
        let w = CMat::zeros(4, 2);
        assert!((mse_rad_approx(&r, &zero, &w, 32, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // S with orthogonal rows: S Sᴴ = L·I exactly.
        let l = 8;
        let s = CMat::from_fn(2, l, |i, j| {
            let phase = std::f64::consts::TAU * (i * j) as f64 / l as f64;
            C64::new(phase.cos(), phase.sin())
        });
        let w = random_matrix(4, 2, 5);
        let gram = HermitianMatrix::gram(&random_matrix(4, 4, 6));
        let exact = mse_rad_exact(&r, &gram, &w, &s, 1.0).unwrap();
        let approx = mse_rad_approx(&r, &gram, &w, l, 1.0).unwrap();
        assert!((exact - approx).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_cases() {
        let r = CorrelationMatrix::identity(4);
        assert_eq!(mi_ce(&r, &HermitianMatrix::zeros(4), 1.0).unwrap(), 0.0);
        let p = 6.0;
        let v = mi_ce(&r, &HermitianMatrix::identity(4).scale(p / 4.0), 1.0).unwrap();
        assert!((v - (1.0 + p / 4.0f64).ln()).abs() < 1e-14);
        let rh = exponential_correlation(4, 0.5).unwrap();
        let gram = HermitianMatrix::gram(&random_matrix(4, 4, 8));
        let chol = mi_ce(&rh, &gram, 1.0).unwrap();
        let s = rh.sqrt().matrix();
        let m = HermitianMatrix::from_raw(s * gram.matrix() * s).add_identity(1.0);
        assert!((chol - m.logdet_evd().unwrap() / 4.0).abs() < 1e-9);
    }

    #[test]
    fn more_energy_never_hurts() {
        let r = exponential_correlation(4, 0.4).unwrap();
        for seed in 0..10 {
            let gram = HermitianMatrix::gram(&random_matrix(4, 4, seed));
            let extra = HermitianMatrix::gram(&random_matrix(4, 2, 50 + seed));
            let before = mse_ce(&r, &gram, 1.0).unwrap();
            let after = mse_ce(&r, &gram.add(&extra), 1.0).unwrap();
            assert!(after <= before + 1e-14);
        }
    }
}
