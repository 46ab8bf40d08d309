//! Rate, harvested power, MSE and the WMMSE surrogate.
//!
//! Conventions: `H_k` is `M × J`, so the matrix seen by IDR `k` is `A_k = H_kᵀ`
//! (`J × M`). Beamformers `W_k` are `M × N_d`, filters `U_k` are `J × N_d`,
//! weights `Λ_k` and MSE matrices `V_k` are `N_d × N_d`.
//!
//! The surrogate is reported in bits and uses a natural-log weight term,
//!
//! ```text
//! f_k = log₂ det Λ_k − (Tr(Λ_k V_k) − N_d) / ln 2,
//! ```
//!
//! which equals `(ln det Λ − Tr ΛV + N_d)/ln 2`. With this scaling `f_k ≤ R_k`
//! for every positive-definite `Λ_k`, with equality at the MMSE filter and
//! `Λ_k = V_k⁻¹`. Only the `1/ln 2` factor on the trace term depends on the
//! log base; the filter, weight and beamformer updates are unaffected.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use crate::config::SystemConfig;
use crate::error::{PassError, Result};
use crate::linalg::{frobenius_sq, hermitian_part, identity, inverse_hpd, ln_det_hpd, min_eigenvalue, re_inner};
use crate::model::ChannelMatrixSet;
use crate::C64;

/// Transmit beamformers `W_k`, one `M × N_d` matrix per IDR.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet(pub Vec<DMatrix<C64>>);

impl BeamformerSet {
    pub fn zeros(num_idrs: usize, m: usize, nd: usize) -> Self {
        BeamformerSet(vec![DMatrix::zeros(m, nd); num_idrs])
    }

    pub fn num_idrs(&self) -> usize {
        self.0.len()
    }

    /// `Σ_k Tr(W_k W_kᴴ)`.
    pub fn total_power(&self) -> f64 {
        self.0.iter().map(frobenius_sq).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        BeamformerSet(self.0.iter().map(|w| w.scale(factor)).collect())
    }

    /// `[W_1 … W_K]` as one `M × K·N_d` matrix.
    pub fn stacked(&self) -> DMatrix<C64> {
        let m = self.0.first().map_or(0, DMatrix::nrows);
        let nd = self.0.first().map_or(0, DMatrix::ncols);
        let mut x = DMatrix::zeros(m, nd * self.0.len());
        for (k, w) in self.0.iter().enumerate() {
            x.columns_mut(k * nd, nd).copy_from(w);
        }
        x
    }

    pub fn from_stacked(x: &DMatrix<C64>, num_idrs: usize) -> Self {
        let nd = x.ncols() / num_idrs.max(1);
        BeamformerSet((0..num_idrs).map(|k| x.columns(k * nd, nd).into_owned()).collect())
    }

    /// `Σ_k W_k W_kᴴ`.
    pub fn covariance(&self) -> DMatrix<C64> {
        let x = self.stacked();
        &x * x.adjoint()
    }
}

/// Receive filters `U_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet(pub Vec<DMatrix<C64>>);

/// MSE weights `Λ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet(pub Vec<DMatrix<C64>>);

#[derive(Debug, Clone, PartialEq)]
pub struct MseMatrix(pub DMatrix<C64>);

fn rx_matrix(ch: &ChannelMatrixSet, k: usize) -> DMatrix<C64> {
    ch.idr[k].transpose()
}

/// `Σ_{k'∈set} A W_k' W_k'ᴴ Aᴴ + σ² I` for the matrix `a` seen by one receiver.
fn covariance_seen(a: &DMatrix<C64>, beams: &BeamformerSet, skip: Option<usize>, sigma2: f64) -> DMatrix<C64> {
    let mut c = identity(a.nrows()).scale(sigma2);
    for (kp, w) in beams.0.iter().enumerate() {
        if Some(kp) == skip {
            continue;
        }
        let aw = a * w;
        c += &aw * aw.adjoint();
    }
    hermitian_part(&c)
}

/// Total received covariance at IDR `k` (signal + interference + noise).
pub fn received_covariance(ch: &ChannelMatrixSet, beams: &BeamformerSet, k: usize, sigma2: f64) -> DMatrix<C64> {
    covariance_seen(&rx_matrix(ch, k), beams, None, sigma2)
}

/// Interference-plus-noise covariance `T_k`.
pub fn interference_covariance(ch: &ChannelMatrixSet, beams: &BeamformerSet, k: usize, sigma2: f64) -> DMatrix<C64> {
    covariance_seen(&rx_matrix(ch, k), beams, Some(k), sigma2)
}

/// Achievable rate of IDR `k` in bits/s/Hz, computed as
/// `log₂ det(T_k + S_k) − log₂ det T_k`.
pub fn rate_k(ch: &ChannelMatrixSet, beams: &BeamformerSet, k: usize, sigma2: f64) -> f64 {
    let a = rx_matrix(ch, k);
    let t = covariance_seen(&a, beams, Some(k), sigma2);
    let aw = &a * &beams.0[k];
    let c = hermitian_part(&(&t + &aw * aw.adjoint()));
    // both matrices dominate σ²I
    match (ln_det_hpd(&c), ln_det_hpd(&t)) {
        (Ok(lc), Ok(lt)) => ((lc - lt) / LN_2).max(0.0),
        _ => f64::NAN,
    }
}

pub fn sum_rate(ch: &ChannelMatrixSet, beams: &BeamformerSet, sigma2: f64) -> f64 {
    (0..beams.num_idrs()).map(|k| rate_k(ch, beams, k, sigma2)).sum()
}

/// Power harvested at EHR `q`: `η_q Σ_k ‖G_qᵀ W_k‖²_F`.
pub fn harvested_energy(ch: &ChannelMatrixSet, beams: &BeamformerSet, q: usize, eta: f64) -> f64 {
    let b = ch.ehr[q].transpose();
    eta * beams.0.iter().map(|w| frobenius_sq(&(&b * w))).sum::<f64>()
}

/// Harvested power of every EHR under `cfg`'s efficiencies.
pub fn harvested_energies(ch: &ChannelMatrixSet, beams: &BeamformerSet, cfg: &SystemConfig) -> Vec<f64> {
    (0..ch.ehr.len())
        .map(|q| harvested_energy(ch, beams, q, cfg.harvest_efficiency[q]))
        .collect()
}

/// `min_q (E_q − E_min)`; `+∞` without EHRs.
pub fn min_energy_margin(ch: &ChannelMatrixSet, beams: &BeamformerSet, cfg: &SystemConfig) -> f64 {
    harvested_energies(ch, beams, cfg)
        .into_iter()
        .map(|e| e - cfg.min_energy)
        .fold(f64::INFINITY, f64::min)
}

/// MSE matrix of IDR `k` under receive filter `u`.
pub fn mse_matrix(ch: &ChannelMatrixSet, beams: &BeamformerSet, u: &DMatrix<C64>, k: usize, sigma2: f64) -> MseMatrix {
    let a = rx_matrix(ch, k);
    let nd = beams.0[k].ncols();
    let uh = u.adjoint();
    let mut v = uh.clone() * u * C64::from(sigma2);
    for (kp, w) in beams.0.iter().enumerate() {
        let g = &uh * (&a * w);
        if kp == k {
            let e = g - identity(nd);
            v += &e * e.adjoint();
        } else {
            v += &g * g.adjoint();
        }
    }
    MseMatrix(hermitian_part(&v))
}

/// MMSE receive filter `C_k⁻¹ A_k W_k`.
pub fn optimal_filter(ch: &ChannelMatrixSet, beams: &BeamformerSet, k: usize, sigma2: f64) -> DMatrix<C64> {
    let a = rx_matrix(ch, k);
    let c = covariance_seen(&a, beams, None, sigma2);
    let aw = &a * &beams.0[k];
    match crate::linalg::cholesky_hpd(&c) {
        Some(chol) => chol.solve(&aw),
        None => DMatrix::zeros(aw.nrows(), aw.ncols()),
    }
}

/// MSE at the MMSE filter, `I − W_kᴴ A_kᴴ C_k⁻¹ A_k W_k`.
pub fn optimal_mse(ch: &ChannelMatrixSet, beams: &BeamformerSet, k: usize, sigma2: f64) -> MseMatrix {
    let a = rx_matrix(ch, k);
    let c = covariance_seen(&a, beams, None, sigma2);
    let aw = &a * &beams.0[k];
    let nd = aw.ncols();
    let v = match crate::linalg::cholesky_hpd(&c) {
        Some(chol) => identity(nd) - aw.adjoint() * chol.solve(&aw),
        None => identity(nd),
    };
    MseMatrix(hermitian_part(&v))
}

/// Threshold below which the MSE matrix is treated as singular and regularised.
pub const WEIGHT_EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightUpdate {
    pub weight: DMatrix<C64>,
    /// Set when `V` was lifted by `WEIGHT_EIGEN_FLOOR·I` before inversion.
    pub regularized: bool,
}

/// `Λ = V⁻¹` with a floor on the smallest eigenvalue of `V`.
pub fn optimal_weight(v: &MseMatrix) -> Result<WeightUpdate> {
    let lmin = min_eigenvalue(&v.0);
    if !(lmin > -1e-8) {
        return Err(PassError::DegenerateChannel(format!(
            "MSE matrix has eigenvalue {lmin:.3e}; the effective channel is rank deficient or ill-posed"
        )));
    }
    let (target, regularized) = if lmin < WEIGHT_EIGEN_FLOOR {
        (&v.0 + identity(v.0.nrows()).scale(WEIGHT_EIGEN_FLOOR), true)
    } else {
        (v.0.clone(), false)
    };
    let weight = hermitian_part(&inverse_hpd(&target)?);
    Ok(WeightUpdate { weight, regularized })
}

/// WMMSE surrogate `f_k` in bits. Returns NaN when `lambda` is not positive definite.
pub fn surrogate_k(
    ch: &ChannelMatrixSet,
    beams: &BeamformerSet,
    u: &DMatrix<C64>,
    lambda: &DMatrix<C64>,
    k: usize,
    sigma2: f64,
) -> f64 {
    let v = mse_matrix(ch, beams, u, k, sigma2);
    surrogate_from_mse(&v, lambda)
}

pub(crate) fn surrogate_from_mse(v: &MseMatrix, lambda: &DMatrix<C64>) -> f64 {
    let nd = lambda.nrows() as f64;
    match ln_det_hpd(lambda) {
        Ok(ld) => (ld - re_inner(&lambda.adjoint(), &v.0) + nd) / LN_2,
        Err(_) => f64::NAN,
    }
}

pub fn sum_surrogate(
    ch: &ChannelMatrixSet,
    beams: &BeamformerSet,
    filters: &FilterSet,
    weights: &WeightSet,
    sigma2: f64,
) -> f64 {
    (0..beams.num_idrs())
        .map(|k| surrogate_k(ch, beams, &filters.0[k], &weights.0[k], k, sigma2))
        .sum()
}

/// Closed-form filter and weight updates at `beams`.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub filters: FilterSet,
    pub weights: WeightSet,
    /// Number of IDRs whose weight needed the eigenvalue floor.
    pub regularized: usize,
}

pub fn wmmse_state(ch: &ChannelMatrixSet, beams: &BeamformerSet, sigma2: f64) -> Result<WmmseState> {
    let mut filters = Vec::with_capacity(beams.num_idrs());
    let mut weights = Vec::with_capacity(beams.num_idrs());
    let mut regularized = 0;
    for k in 0..beams.num_idrs() {
        filters.push(optimal_filter(ch, beams, k, sigma2));
        let upd = optimal_weight(&optimal_mse(ch, beams, k, sigma2))?;
        regularized += usize::from(upd.regularized);
        weights.push(upd.weight);
    }
    Ok(WmmseState {
        filters: FilterSet(filters),
        weights: WeightSet(weights),
        regularized,
    })
}

/// First-order minorant of the harvested power at EHR `q`, linearised at `anchor`.
pub fn sca_energy_bound(
    ch: &ChannelMatrixSet,
    beams: &BeamformerSet,
    anchor: &BeamformerSet,
    q: usize,
    eta: f64,
) -> f64 {
    let b = ch.ehr[q].transpose();
    let mut constant = 0.0;
    let mut linear = 0.0;
    for (w, wt) in beams.0.iter().zip(&anchor.0) {
        let bwt = &b * wt;
        constant += frobenius_sq(&bwt);
        linear += re_inner(&bwt, &(&b * w));
    }
    eta * (2.0 * linear - constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_beams, random_channels, random_hpd, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SIGMA2: f64 = 1e-8;

    #[test]
    fn zero_beams_give_zero_rate_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let w = BeamformerSet::zeros(2, 4, 3);
        assert_eq!(sum_rate(&ch, &w, SIGMA2), 0.0);
        assert_eq!(harvested_energy(&ch, &w, 0, 0.5), 0.0);
        let u0 = optimal_filter(&ch, &w, 0, SIGMA2);
        assert!(u0.norm() == 0.0);
    }

    #[test]
    fn scalar_rate() {
        let ch = ChannelMatrixSet {
            idr: vec![DMatrix::from_element(1, 1, C64::new(3e-4, -1e-4))],
            ehr: vec![],
        };
        let w = BeamformerSet(vec![DMatrix::from_element(1, 1, C64::new(0.0, 2.0))]);
        let snr = (9e-8 + 1e-8) * 4.0 / SIGMA2;
        assert!((rate_k(&ch, &w, 0, SIGMA2) - (1.0 + snr).log2()).abs() < 1e-12);
        assert_eq!(sum_rate(&ch, &w, SIGMA2), rate_k(&ch, &w, 0, SIGMA2));
    }

    #[test]
    fn rate_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
            let w = random_beams(&mut rng, 2, 4, 3, 3.0);
            for k in 0..2 {
                // oracle: eigenvalues of T⁻¹ᐟ² S T⁻¹ᐟ² via the whitened matrix
                let a = ch.idr[k].transpose();
                let mut t = identity(3).scale(SIGMA2);
                for kp in 0..2 {
                    if kp != k {
                        let aw = &a * &w.0[kp];
                        t += &aw * aw.adjoint();
                    }
                }
                let aw = &a * &w.0[k];
                let s = &aw * aw.adjoint();
                let eig = nalgebra::SymmetricEigen::new(hermitian_part(&t));
                let inv_sqrt = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| C64::from(1.0 / x.sqrt())))
                    * eig.eigenvectors.adjoint();
                let whitened = &inv_sqrt * s * &inv_sqrt;
                let oracle: f64 = crate::linalg::hermitian_eigenvalues(&whitened)
                    .iter()
                    .map(|x| (1.0 + x).log2())
                    .sum();
                let r = rate_k(&ch, &w, k, SIGMA2);
                assert!((r - oracle).abs() <= 1e-9 * oracle.max(1.0), "{r} vs {oracle}");
            }
        }
    }

    #[test]
    fn energy_matches_entrywise_sum_and_is_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let w = random_beams(&mut rng, 2, 4, 3, 2.0);
        for q in 0..2 {
            let g = &ch.ehr[q];
            let mut brute = 0.0;
            for wk in &w.0 {
                for j in 0..3 {
                    for s in 0..3 {
                        let mut acc = C64::new(0.0, 0.0);
                        for m in 0..4 {
                            acc += g[(m, j)] * wk[(m, s)];
                        }
                        brute += acc.norm_sqr();
                    }
                }
            }
            let e = harvested_energy(&ch, &w, q, 0.5);
            assert!((e - 0.5 * brute).abs() <= 1e-10 * e);
            let e4 = harvested_energy(&ch, &w.scaled(2.0), q, 0.5);
            assert!((e4 - 4.0 * e).abs() <= 1e-12 * e4);
        }
    }

    #[test]
    fn mse_identity_for_zero_filter_and_tight_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let w = random_beams(&mut rng, 2, 4, 3, 2.0);
        let v0 = mse_matrix(&ch, &w, &DMatrix::zeros(3, 3), 0, SIGMA2);
        assert!((v0.0 - identity(3)).norm() < 1e-15);
        for k in 0..2 {
            let u = optimal_filter(&ch, &w, k, SIGMA2);
            let v = mse_matrix(&ch, &w, &u, k, SIGMA2);
            let vopt = optimal_mse(&ch, &w, k, SIGMA2);
            assert!((v.0 - vopt.0).norm() < 1e-10);
        }
    }

    #[test]
    fn mse_is_hermitian_psd_for_arbitrary_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
            let w = random_beams(&mut rng, 2, 4, 3, 2.0);
            let u = random_matrix(&mut rng, 3, 3, 1e3);
            let v = mse_matrix(&ch, &w, &u, 1, SIGMA2);
            assert!((&v.0 - v.0.adjoint()).norm() <= 1e-12 * v.0.norm().max(1.0));
            assert!(min_eigenvalue(&v.0) >= -1e-10 * v.0.norm().max(1.0));
        }
    }

    #[test]
    fn weights_invert_mse() {
        let v = MseMatrix(identity(3));
        assert_eq!(optimal_weight(&v).unwrap().weight, identity(3));
        let half = MseMatrix(identity(3).scale(0.5));
        assert!((optimal_weight(&half).unwrap().weight - identity(3).scale(2.0)).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let pd = random_hpd(&mut rng, 3);
            let l = optimal_weight(&MseMatrix(pd.clone())).unwrap();
            assert!(!l.regularized);
            assert!((&l.weight * &pd - identity(3)).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_weight_is_regularised_and_garbage_rejected() {
        let mut v = identity(2);
        v[(1, 1)] = C64::from(0.0);
        let upd = optimal_weight(&MseMatrix(v)).unwrap();
        assert!(upd.regularized);
        assert!((upd.weight[(1, 1)].re - 1e12).abs() / 1e12 < 1e-6);
        let mut bad = identity(2);
        bad[(1, 1)] = C64::from(-1.0);
        assert!(matches!(optimal_weight(&MseMatrix(bad)), Err(PassError::DegenerateChannel(_))));
    }

    #[test]
    fn surrogate_with_identity_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let w = random_beams(&mut rng, 2, 4, 3, 2.0);
        let u = random_matrix(&mut rng, 3, 3, 1e3);
        let v = mse_matrix(&ch, &w, &u, 0, SIGMA2);
        let f = surrogate_k(&ch, &w, &u, &identity(3), 0, SIGMA2);
        let tr: f64 = v.0.diagonal().iter().map(|x| x.re).sum();
        assert!((f - (3.0 - tr) / LN_2).abs() < 1e-9 * tr.max(1.0));
    }

    #[test]
    fn surrogate_tight_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
            let w = random_beams(&mut rng, 2, 4, 3, 3.0);
            let st = wmmse_state(&ch, &w, SIGMA2).unwrap();
            for k in 0..2 {
                let r = rate_k(&ch, &w, k, SIGMA2);
                let f = surrogate_k(&ch, &w, &st.filters.0[k], &st.weights.0[k], k, SIGMA2);
                assert!((f - r).abs() <= 1e-8 * r.max(1.0));
                for _ in 0..100 {
                    let u = &st.filters.0[k] + random_matrix(&mut rng, 3, 3, 1e2);
                    let l = random_hpd(&mut rng, 3).scale(10.0);
                    let fr = surrogate_k(&ch, &w, &u, &l, k, SIGMA2);
                    assert!(fr <= r + 1e-9, "{fr} > {r}");
                }
            }
        }
    }

    #[test]
    fn sca_bound_tight_at_anchor_and_minorises() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let wt = random_beams(&mut rng, 2, 4, 3, 2.0);
        let e = harvested_energy(&ch, &wt, 0, 0.5);
        assert!((sca_energy_bound(&ch, &wt, &wt, 0, 0.5) - e).abs() < 1e-10);
        let zero = BeamformerSet::zeros(2, 4, 3);
        assert!((sca_energy_bound(&ch, &zero, &wt, 0, 0.5) + e).abs() < 1e-10);
        for _ in 0..200 {
            let w = random_beams(&mut rng, 2, 4, 3, 2.0);
            assert!(sca_energy_bound(&ch, &w, &wt, 1, 0.5) <= harvested_energy(&ch, &w, 1, 0.5) + 1e-10);
        }
    }

    #[test]
    fn right_unitary_rotation_leaves_rate_and_energy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let w = random_beams(&mut rng, 2, 4, 3, 2.0);
        let q = nalgebra::linalg::QR::new(random_matrix(&mut rng, 3, 3, 1.0)).q();
        let rotated = BeamformerSet(w.0.iter().map(|wk| wk * &q).collect());
        assert!((sum_rate(&ch, &w, SIGMA2) - sum_rate(&ch, &rotated, SIGMA2)).abs() < 1e-9);
        let e = harvested_energy(&ch, &w, 0, 0.5);
        assert!((e - harvested_energy(&ch, &rotated, 0, 0.5)).abs() < 1e-12 * e);
    }

    #[test]
    fn stacking_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_beams(&mut rng, 3, 4, 2, 1.0);
        assert_eq!(BeamformerSet::from_stacked(&w.stacked(), 3), w);
        assert!((w.covariance().trace().re - w.total_power()).abs() < 1e-12);
    }
}
