//! Beamforming block of the alternating optimisation.
//!
//! For fixed filters and weights the WMMSE objective is a concave quadratic in
//! the stacked beamformer `X = [W_1 … W_K]`:
//!
//! ```text
//! maximise  −Tr(Xᴴ Φ X) + 2 Re Tr(Bᴴ X)
//! s.t.      Re Tr(C_qᴴ X) ≥ e_q          (linearised harvested power, per EHR)
//!           Tr(Xᴴ X) ≤ P_max
//! ```
//!
//! with `Φ = Σ_k A_kᴴ U_k Λ_k U_kᴴ A_k`, `B_k = A_kᴴ U_k Λ_k`,
//! `C_q = 2η_q G_q* G_qᵀ X⁽ᵗ⁾` and `e_q = E_min + E_q(X⁽ᵗ⁾)`.
//!
//! The Lagrangian maximiser for duals `(μ, ν)` is the linear solve
//! `X = (Φ + νI)⁻¹ (B + ½ Σ μ_q C_q)`, so the problem is solved on its dual:
//! a smooth convex function of `Q + 1` non-negative variables, minimised by
//! projected Newton with an Armijo search.

use nalgebra::{DMatrix, DVector};

use crate::config::SystemConfig;
use crate::error::{PassError, Result};
use crate::linalg::{frobenius_sq, hermitian_part, identity, re_inner};
use crate::metrics::{self, BeamformerSet, FilterSet, WeightSet, WmmseState};
use crate::model::ChannelMatrixSet;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolveSettings {
    pub surrogate_rel_tol: f64,
    pub max_inner_iters: usize,
    pub qp_kkt_tol: f64,
    pub qp_max_iters: usize,
}

impl Default for InnerSolveSettings {
    fn default() -> Self {
        InnerSolveSettings {
            surrogate_rel_tol: 1e-4,
            max_inner_iters: 100,
            qp_kkt_tol: 1e-6,
            qp_max_iters: 2000,
        }
    }
}

impl InnerSolveSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.surrogate_rel_tol > 0.0 && self.qp_kkt_tol > 0.0) {
            return Err(PassError::InvalidConfig("solver tolerances must be > 0".into()));
        }
        if self.max_inner_iters == 0 || self.qp_max_iters == 0 {
            return Err(PassError::InvalidConfig("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintId {
    Energy(usize),
    Power,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub beams: BeamformerSet,
    pub kkt_residual: f64,
    pub active_constraints: Vec<ConstraintId>,
    /// `Σ_k f_k` at the returned beams with the filters and weights held fixed.
    pub objective_value: f64,
    pub iterations: usize,
    pub energy_duals: Vec<f64>,
    pub power_dual: f64,
}

/// Feasibility slack used when checking iterates against the power budget.
pub const POWER_REL_SLACK: f64 = 1e-9;
/// Feasibility slack used when checking iterates against the energy floor.
pub const ENERGY_REL_SLACK: f64 = 1e-6;

/// The concave quadratic program in stacked form.
#[derive(Debug, Clone)]
pub struct BeamformingQp {
    pub phi: DMatrix<C64>,
    pub linear: DMatrix<C64>,
    pub energy_normals: Vec<DMatrix<C64>>,
    pub energy_rhs: Vec<f64>,
    pub power: f64,
    energy_scale: Vec<f64>,
    eigvals: Vec<f64>,
    eigvecs: DMatrix<C64>,
    // B and C_q in the eigenbasis of Φ
    linear_eig: DMatrix<C64>,
    normals_eig: Vec<DMatrix<C64>>,
}

impl BeamformingQp {
    pub fn new(
        ch: &ChannelMatrixSet,
        filters: &FilterSet,
        weights: &WeightSet,
        anchor: &BeamformerSet,
        cfg: &SystemConfig,
    ) -> Self {
        let m = ch.num_tx();
        let mut phi = DMatrix::zeros(m, m);
        let mut blocks = Vec::with_capacity(ch.idr.len());
        for (k, h) in ch.idr.iter().enumerate() {
            // Aᴴ = conj(H)
            let ah = h.conjugate();
            let aul = &ah * &filters.0[k] * &weights.0[k];
            phi += &aul * filters.0[k].adjoint() * h.transpose();
            blocks.push(aul);
        }
        let phi = hermitian_part(&phi);
        let linear = BeamformerSet(blocks).stacked();

        let xt = anchor.stacked();
        let mut energy_normals = Vec::with_capacity(ch.ehr.len());
        let mut energy_rhs = Vec::with_capacity(ch.ehr.len());
        let mut energy_scale = Vec::with_capacity(ch.ehr.len());
        for (q, g) in ch.ehr.iter().enumerate() {
            let eta = cfg.harvest_efficiency[q];
            let psi = g.conjugate() * g.transpose();
            let psi_x = &psi * &xt;
            let e_anchor = eta * re_inner(&xt, &psi_x);
            let rhs = cfg.min_energy + e_anchor;
            energy_normals.push(psi_x.scale(2.0 * eta));
            energy_rhs.push(rhs);
            energy_scale.push(cfg.min_energy.max(1e-3 * rhs.abs()).max(f64::MIN_POSITIVE));
        }
        let eig = nalgebra::SymmetricEigen::new(phi.clone());
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let floor = (1e-12 * top).max(f64::MIN_POSITIVE);
        let eigvecs = eig.eigenvectors;
        let mut linear_eig = eigvecs.adjoint() * &linear;
        // B lies in the range of Φ; its component on the numerical null space is roundoff
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l <= floor {
                linear_eig.row_mut(i).fill(C64::new(0.0, 0.0));
            }
        }
        let normals_eig = energy_normals.iter().map(|c| eigvecs.adjoint() * c).collect();
        let eigvals = eig.eigenvalues.iter().map(|&l| l.max(floor)).collect();
        BeamformingQp {
            eigvals,
            eigvecs,
            linear_eig,
            normals_eig,
            phi,
            linear,
            energy_normals,
            energy_rhs,
            power: cfg.max_power,
            energy_scale,
        }
    }

    pub fn num_energy(&self) -> usize {
        self.energy_rhs.len()
    }

    /// `−Tr(XᴴΦX) + 2 Re Tr(BᴴX)` (the `X`-dependent part of `ln 2 · Σ_k f_k`).
    pub fn quadratic_objective(&self, x: &DMatrix<C64>) -> f64 {
        -re_inner(x, &(&self.phi * x)) + 2.0 * re_inner(&self.linear, x)
    }

    /// Per-constraint slack, positive when satisfied: energies then power.
    pub fn slacks(&self, x: &DMatrix<C64>) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .energy_normals
            .iter()
            .zip(&self.energy_rhs)
            .map(|(c, e)| re_inner(c, x) - e)
            .collect();
        s.push(self.power - frobenius_sq(x));
        s
    }

    /// `(Λ + νI)⁻¹ Z` for `Z` already in the eigenbasis.
    fn shifted_scale(&self, nu: f64, z: &DMatrix<C64>) -> DMatrix<C64> {
        let mut t = z.clone();
        for (i, mut row) in t.row_iter_mut().enumerate() {
            row.scale_mut(1.0 / (self.eigvals[i] + nu));
        }
        t
    }

    /// Smallest `ν ≥ 0` with `‖(Φ + νI)⁻¹ D‖² ≤ P`, from the secular equation.
    fn power_multiplier(&self, weights: &[f64]) -> f64 {
        let p = self.power;
        let power = |nu: f64| -> f64 {
            weights.iter().zip(&self.eigvals).map(|(a, l)| a / (l + nu).powi(2)).sum()
        };
        if power(0.0) <= p {
            return 0.0;
        }
        let total: f64 = weights.iter().sum();
        let (mut lo, mut hi) = (0.0, (total / p).sqrt());
        let mut nu = lo;
        for _ in 0..200 {
            let pw = power(nu);
            if (pw - p).abs() <= 1e-15 * p {
                break;
            }
            if pw > p {
                lo = nu;
            } else {
                hi = nu;
            }
            // Newton on 1/‖X(ν)‖ − 1/√P, which is close to linear in ν
            let dpw: f64 = -2.0 * weights.iter().zip(&self.eigvals).map(|(a, l)| a / (l + nu).powi(3)).sum::<f64>();
            let psi = 1.0 / pw.sqrt() - 1.0 / p.sqrt();
            let dpsi = -0.5 * dpw / pw.powf(1.5);
            let step = nu - psi / dpsi;
            nu = if step > lo && step < hi && dpsi > 0.0 { step } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        nu
    }

    fn eval(&self, y: &[f64]) -> DualPoint {
        let mut dt = self.linear_eig.clone();
        for (i, c) in self.normals_eig.iter().enumerate() {
            let mu = y[i] / self.energy_scale[i];
            if mu != 0.0 {
                dt += c.scale(0.5 * mu);
            }
        }
        let weights: Vec<f64> = dt.row_iter().map(|r| r.norm_squared()).collect();
        let nu = self.power_multiplier(&weights);
        let xt = self.shifted_scale(nu, &dt);
        let mut g = re_inner(&dt, &xt) + nu * self.power;
        let mut grad = Vec::with_capacity(y.len());
        for i in 0..y.len() {
            g -= y[i] / self.energy_scale[i] * self.energy_rhs[i];
            grad.push((re_inner(&self.normals_eig[i], &xt) - self.energy_rhs[i]) / self.energy_scale[i]);
        }
        let power_slack = self.power - frobenius_sq(&xt);
        DualPoint { y: y.to_vec(), g, grad, nu, power_slack, x: &self.eigvecs * &xt, xt }
    }

    /// Hessian of the dual with `ν` minimised out, in scaled variables.
    fn hessian(&self, pt: &DualPoint) -> DMatrix<f64> {
        let q = self.num_energy();
        let sc = &self.energy_scale;
        let sinv_c: Vec<DMatrix<C64>> = self.normals_eig.iter().map(|c| self.shifted_scale(pt.nu, c)).collect();
        let mut h = DMatrix::from_fn(q, q, |a, b| 0.5 * re_inner(&self.normals_eig[a], &sinv_c[b]) / (sc[a] * sc[b]));
        if pt.nu > 0.0 {
            let sinv_x = self.shifted_scale(pt.nu, &pt.xt);
            let xx = re_inner(&pt.xt, &sinv_x);
            let cx: Vec<f64> = (0..q).map(|a| re_inner(&self.normals_eig[a], &sinv_x) / sc[a]).collect();
            if xx > 0.0 {
                for a in 0..q {
                    for b in 0..q {
                        h[(a, b)] -= cx[a] * cx[b] / (2.0 * xx);
                    }
                }
            }
        }
        hermitian_sym(h)
    }

    fn residual(&self, pt: &DualPoint) -> f64 {
        let dual = pt.y.iter().zip(&pt.grad).map(|(y, g)| y.min(*g).abs()).fold(0.0, f64::max);
        let power = if pt.nu > 0.0 {
            pt.power_slack.abs() / self.power
        } else {
            (-pt.power_slack).max(0.0) / self.power
        };
        dual.max(power)
    }
}

fn hermitian_sym(h: DMatrix<f64>) -> DMatrix<f64> {
    (&h + h.transpose()) * 0.5
}

struct DualPoint {
    y: Vec<f64>,
    g: f64,
    grad: Vec<f64>,
    nu: f64,
    power_slack: f64,
    x: DMatrix<C64>,
    xt: DMatrix<C64>,
}

/// Duals beyond this (in normalised units) mean the constraint set is empty.
const DUAL_DIVERGENCE: f64 = 1e14;

/// Projected Newton on the energy duals; the power dual is eliminated exactly.
fn solve_dual(qp: &BeamformingQp, settings: &InnerSolveSettings) -> Result<(DualPoint, usize, f64)> {
    let n = qp.num_energy();
    let mut pt = qp.eval(&vec![0.0; n]);
    let target = (settings.qp_kkt_tol * 1e-6).max(1e-14);
    let mut residual = qp.residual(&pt);
    let mut iters = 0;
    while n > 0 && iters < settings.qp_max_iters && residual > target {
        iters += 1;
        let w: f64 = pt
            .y
            .iter()
            .zip(&pt.grad)
            .map(|(y, g)| (y - (y - g).max(0.0)).powi(2))
            .sum::<f64>()
            .sqrt();
        let eps = w.min(1e-6);
        let active: Vec<bool> = (0..n).map(|i| pt.y[i] <= eps && pt.grad[i] > 0.0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();

        let mut dir = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                dir[i] = -pt.grad[i];
            }
        }
        if !free.is_empty() {
            let h = qp.hessian(&pt);
            let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| pt.grad[i]));
            let scale = hf.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
            let mut damping = 0.0;
            let step = loop {
                let reg = &hf + DMatrix::identity(free.len(), free.len()) * damping;
                if let Some(c) = nalgebra::Cholesky::new(reg) {
                    break c.solve(&gf);
                }
                damping = if damping == 0.0 { 1e-12 * scale } else { damping * 100.0 };
            };
            for (a, &i) in free.iter().enumerate() {
                dir[i] = -step[a];
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = (0..n).map(|i| (pt.y[i] + alpha * dir[i]).max(0.0)).collect();
            let cand = qp.eval(&trial);
            let decrease: f64 = (0..n).map(|i| pt.grad[i] * (trial[i] - pt.y[i])).sum();
            if cand.g <= pt.g + 1e-4 * decrease.min(0.0) + 1e-15 * pt.g.abs() {
                accepted = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else { break };
        let moved = next.y.iter().zip(&pt.y).any(|(a, b)| a != b);
        pt = next;
        residual = qp.residual(&pt);
        if pt.y.iter().any(|&v| v > DUAL_DIVERGENCE) {
            return Err(PassError::InfeasibleSubproblem(
                "dual variables diverge: no beamformer satisfies the linearised energy and power constraints".into(),
            ));
        }
        if !moved {
            break;
        }
    }
    Ok((pt, iters, residual))
}

/// Solves the beamforming subproblem for fixed filters and weights with the
/// harvested-power constraints linearised at `anchor`.
pub fn solve_beamforming_qp(
    ch: &ChannelMatrixSet,
    filters: &FilterSet,
    weights: &WeightSet,
    anchor: &BeamformerSet,
    cfg: &SystemConfig,
    settings: &InnerSolveSettings,
) -> Result<QpSolution> {
    let qp = BeamformingQp::new(ch, filters, weights, anchor, cfg);
    let (pt, iterations, residual) = solve_dual(&qp, settings)?;
    let q = qp.num_energy();
    let mut x = pt.x.clone();
    let power = frobenius_sq(&x);
    if power > qp.power {
        x.scale_mut((qp.power / power).sqrt());
    }
    let beams = BeamformerSet::from_stacked(&x, ch.idr.len());
    let slacks = qp.slacks(&x);
    let mut active = Vec::new();
    for i in 0..q {
        if pt.y[i] > 0.0 || slacks[i].abs() <= settings.qp_kkt_tol * qp.energy_scale[i] {
            active.push(ConstraintId::Energy(i));
        }
    }
    if pt.nu > 0.0 || slacks[q].abs() <= settings.qp_kkt_tol * qp.power {
        active.push(ConstraintId::Power);
    }
    let objective_value = (0..ch.idr.len())
        .map(|k| metrics::surrogate_k(ch, &beams, &filters.0[k], &weights.0[k], k, cfg.noise_power))
        .sum();
    let sol = QpSolution {
        beams,
        kkt_residual: residual,
        active_constraints: active,
        objective_value,
        iterations,
        energy_duals: (0..q).map(|i| pt.y[i] / qp.energy_scale[i]).collect(),
        power_dual: pt.nu,
    };
    if residual > settings.qp_kkt_tol {
        return Err(PassError::QpMaxIterations {
            iterations,
            kkt_residual: residual,
            best: Box::new(sol),
        });
    }
    Ok(sol)
}

/// Power budget and true harvested-power feasibility within the solver slacks.
pub fn is_feasible(ch: &ChannelMatrixSet, beams: &BeamformerSet, cfg: &SystemConfig) -> bool {
    beams.total_power() <= cfg.max_power * (1.0 + POWER_REL_SLACK)
        && metrics::harvested_energies(ch, beams, cfg)
            .iter()
            .all(|&e| e >= cfg.min_energy * (1.0 - ENERGY_REL_SLACK))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerRow {
    pub iteration: usize,
    pub surrogate: f64,
    pub sum_rate: f64,
    pub power: f64,
    pub min_energy_margin: f64,
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub beams: BeamformerSet,
    /// Filters and weights re-evaluated at the returned beams.
    pub state: WmmseState,
    pub sum_rate: f64,
    pub rows: Vec<InnerRow>,
    pub iterations: usize,
    pub converged: bool,
    pub regularized_weights: usize,
}

/// Absolute slack for monotonicity audits, scaled by `max(1, |value|)`.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Alternates closed-form filter/weight updates with the beamforming QP
/// until the sum-rate improvement drops below `surrogate_rel_tol`.
pub fn wmmse_inner_loop(
    ch: &ChannelMatrixSet,
    w_init: &BeamformerSet,
    cfg: &SystemConfig,
    settings: &InnerSolveSettings,
) -> Result<InnerOutcome> {
    settings.validate()?;
    if !is_feasible(ch, w_init, cfg) {
        return Err(PassError::InfeasibleScenario(
            "initial beamformers violate the power budget or the harvested-power floor".into(),
        ));
    }
    let sigma2 = cfg.noise_power;
    let mut beams = w_init.clone();
    let mut state = metrics::wmmse_state(ch, &beams, sigma2)?;
    let mut regularized = state.regularized;
    let mut rate = metrics::sum_rate(ch, &beams, sigma2);
    let mut rows = vec![InnerRow {
        iteration: 0,
        surrogate: metrics::sum_surrogate(ch, &beams, &state.filters, &state.weights, sigma2),
        sum_rate: rate,
        power: beams.total_power(),
        min_energy_margin: metrics::min_energy_margin(ch, &beams, cfg),
    }];
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=settings.max_inner_iters {
        iterations = t;
        let before = metrics::sum_surrogate(ch, &beams, &state.filters, &state.weights, sigma2);
        let slack = MONOTONE_SLACK * before.abs().max(1.0);
        let qp = solve_beamforming_qp(ch, &state.filters, &state.weights, &beams, cfg, settings)?;
        if qp.objective_value < before - slack {
            return Err(PassError::Internal(format!(
                "surrogate decreased in the beamforming step: {before} -> {}",
                qp.objective_value
            )));
        }
        if qp.objective_value <= before {
            converged = true;
            break;
        }
        let next_state = metrics::wmmse_state(ch, &qp.beams, sigma2)?;
        let next_rate = metrics::sum_rate(ch, &qp.beams, sigma2);
        if next_rate < qp.objective_value - slack {
            return Err(PassError::Internal(format!(
                "sum-rate {next_rate} fell below the surrogate {}",
                qp.objective_value
            )));
        }
        regularized += next_state.regularized;
        rows.push(InnerRow {
            iteration: t,
            surrogate: qp.objective_value,
            sum_rate: next_rate,
            power: qp.beams.total_power(),
            min_energy_margin: metrics::min_energy_margin(ch, &qp.beams, cfg),
        });
        let rel = (next_rate - rate) / rate.abs().max(1.0);
        beams = qp.beams;
        state = next_state;
        rate = next_rate;
        if rel < settings.surrogate_rel_tol {
            converged = true;
            break;
        }
    }
    Ok(InnerOutcome {
        beams,
        state,
        sum_rate: rate,
        rows,
        iterations,
        converged,
        regularized_weights: regularized,
    })
}

/// `η_q G_q* G_qᵀ`, so that `E_q = Re Tr(Ψ_q Σ_k W_k W_kᴴ)`.
fn energy_operators(ch: &ChannelMatrixSet, cfg: &SystemConfig) -> Vec<DMatrix<C64>> {
    ch.ehr
        .iter()
        .enumerate()
        .map(|(q, g)| hermitian_part(&(g.conjugate() * g.transpose()).scale(cfg.harvest_efficiency[q])))
        .collect()
}

fn covariance_energies(ops: &[DMatrix<C64>], r: &DMatrix<C64>) -> Vec<f64> {
    ops.iter().map(|psi| re_inner(psi, r)).collect()
}

fn top_eigenvector(a: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    eig.eigenvectors.columns(imax, 1).into_owned()
}

/// Transmit covariance (trace `P_max`) approximately maximising the weakest
/// EHR's harvested power, by multiplicative weights over the EHRs.
fn max_min_energy_covariance(ops: &[DMatrix<C64>], power: f64) -> DMatrix<C64> {
    let q = ops.len();
    let m = ops[0].nrows();
    let mut w = vec![1.0 / q as f64; q];
    let mut avg = DMatrix::zeros(m, m);
    let rounds = 400;
    for t in 0..rounds {
        let mut mix = DMatrix::zeros(m, m);
        for (wq, psi) in w.iter().zip(ops) {
            mix += psi.scale(*wq);
        }
        let v = top_eigenvector(&mix);
        let r = (&v * v.adjoint()).scale(power);
        let e = covariance_energies(ops, &r);
        let emax = e.iter().fold(f64::MIN_POSITIVE, |a, &b| a.max(b));
        let step = 2.0 / ((t + 1) as f64).sqrt();
        for (wq, eq) in w.iter_mut().zip(&e) {
            *wq *= (-step * eq / emax).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        avg += (r - &avg).scale(1.0 / (t + 1) as f64);
    }
    hermitian_part(&avg)
}

/// Splits a covariance across the `K·N_d` stream columns with `XXᴴ = R`,
/// spreading each eigen-direction over all streams with a DFT mixer.
fn factor_covariance(r: &DMatrix<C64>, num_idrs: usize, nd: usize) -> BeamformerSet {
    let m = r.nrows();
    let cols = num_idrs * nd;
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(r));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let rank = m.min(cols);
    let mut f = DMatrix::zeros(m, rank);
    for (c, &i) in order.iter().take(rank).enumerate() {
        let s = eig.eigenvalues[i].max(0.0).sqrt();
        f.column_mut(c).copy_from(&eig.eigenvectors.column(i).scale(s));
    }
    let norm = (cols as f64).sqrt();
    let mixer = DMatrix::from_fn(rank, cols, |i, c| {
        C64::from_polar(1.0 / norm, -2.0 * std::f64::consts::PI * (i * c) as f64 / cols as f64)
    });
    let x = f * mixer;
    let mut beams = BeamformerSet::from_stacked(&x, num_idrs);
    let p = beams.total_power();
    let target = r.trace().re;
    if p > 0.0 {
        beams = beams.scaled((target / p).sqrt());
    }
    beams
}

/// A full-power starting point that meets every harvested-power floor.
///
/// Blends an isotropic covariance with the max–min harvested-power covariance,
/// keeping 90% of the largest isotropic share that still meets `E_min`. Fails
/// with [`PassError::InfeasibleScenario`] when even the energy-directed
/// covariance misses the floor.
pub fn initial_beams(ch: &ChannelMatrixSet, cfg: &SystemConfig) -> Result<BeamformerSet> {
    let m = ch.num_tx();
    let nd = cfg.num_streams();
    let k = ch.idr.len();
    let p = cfg.max_power;
    let iso = identity(m).scale(p / m as f64);
    if ch.ehr.is_empty() {
        return Ok(factor_covariance(&iso, k, nd));
    }
    let ops = energy_operators(ch, cfg);
    let directed = max_min_energy_covariance(&ops, p);
    let e_dir = covariance_energies(&ops, &directed);
    let e_iso = covariance_energies(&ops, &iso);
    let emin = cfg.min_energy;
    if let Some(q) = e_dir.iter().position(|&e| e < emin) {
        return Err(PassError::InfeasibleScenario(format!(
            "EHR {q} harvests at most {:.4e} W with energy-directed beams at full power, below {:.4e} W",
            e_dir[q], emin
        )));
    }
    let mut share: f64 = 1.0;
    for (ed, ei) in e_dir.iter().zip(&e_iso) {
        if *ei < emin {
            share = share.min((ed - emin) / (ed - ei));
        }
    }
    for s in [0.9 * share.clamp(0.0, 1.0), 0.0] {
        let r = directed.scale(1.0 - s) + iso.scale(s);
        let beams = factor_covariance(&r, k, nd);
        if is_feasible(ch, &beams, cfg) {
            return Ok(beams);
        }
    }
    Err(PassError::InfeasibleScenario(
        "energy-directed covariance could not be realised with the available streams".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;
    use crate::testutil::{random_beams, random_channels};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(q: usize, emin: f64, pmax: f64) -> SystemConfig {
        let mut raw = RawConfig::reference().with_ehrs(q);
        raw.min_energy = emin;
        raw.max_power = pmax;
        SystemConfig::new(raw).unwrap()
    }

    #[test]
    fn unconstrained_qp_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut raw = RawConfig::reference().with_ehrs(0);
        raw.num_idrs = 1;
        raw.max_power = 1e30;
        let cfg = SystemConfig::new(raw).unwrap();
        let ch = random_channels(&mut rng, 4, 3, 1, 0, 1e-4);
        let w = random_beams(&mut rng, 1, 4, 3, 1.0);
        let st = metrics::wmmse_state(&ch, &w, cfg.noise_power).unwrap();
        let sol = solve_beamforming_qp(&ch, &st.filters, &st.weights, &w, &cfg, &InnerSolveSettings::default()).unwrap();
        assert!(sol.kkt_residual <= 1e-6);
        assert!(sol.active_constraints.is_empty());
        // central finite differences of Σ f_k at the solution
        let x0 = sol.beams.stacked();
        let f = |x: &DMatrix<C64>| {
            let b = BeamformerSet::from_stacked(x, 1);
            metrics::surrogate_k(&ch, &b, &st.filters.0[0], &st.weights.0[0], 0, cfg.noise_power)
        };
        let h = 1e-4 * x0.norm() / (x0.len() as f64).sqrt();
        let mut grad_sq = 0.0;
        for idx in 0..x0.len() {
            for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut xp = x0.clone();
                let mut xm = x0.clone();
                xp[idx] += unit * h;
                xm[idx] -= unit * h;
                grad_sq += ((f(&xp) - f(&xm)) / (2.0 * h)).powi(2);
            }
        }
        let scale = f(&x0).abs().max(1.0) / x0.norm();
        assert!(grad_sq.sqrt() <= 1e-6 * scale.max(1.0), "gradient norm {}", grad_sq.sqrt());
    }

    #[test]
    fn anchor_is_never_beaten_downwards() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = small_cfg(2, 0.0, 20.0);
        for _ in 0..20 {
            let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
            let w = random_beams(&mut rng, 2, 4, 3, 1.0);
            let w = w.scaled((10.0 / w.total_power()).sqrt());
            let st = metrics::wmmse_state(&ch, &w, cfg.noise_power).unwrap();
            let before = metrics::sum_surrogate(&ch, &w, &st.filters, &st.weights, cfg.noise_power);
            let sol = solve_beamforming_qp(&ch, &st.filters, &st.weights, &w, &cfg, &InnerSolveSettings::default()).unwrap();
            assert!(sol.objective_value >= before - 1e-9);
            assert!(sol.beams.total_power() <= 20.0 * (1.0 + 1e-9));
            for q in 0..2 {
                assert!(metrics::sca_energy_bound(&ch, &sol.beams, &w, q, 0.5) >= -1e-12);
            }
        }
    }

    #[test]
    fn infeasible_anchor_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = small_cfg(1, 1.0, 1.0); // 1 W harvested from 1 W transmitted at 1e-4 gain
        let ch = random_channels(&mut rng, 4, 3, 2, 1, 1e-4);
        let w = random_beams(&mut rng, 2, 4, 3, 0.1);
        let st = metrics::wmmse_state(&ch, &w, cfg.noise_power).unwrap();
        let err = solve_beamforming_qp(&ch, &st.filters, &st.weights, &w, &cfg, &InnerSolveSettings::default());
        assert!(matches!(err, Err(PassError::InfeasibleSubproblem(_))), "{err:?}");
    }

    #[test]
    fn scalar_loop_goes_to_full_power() {
        let mut raw = RawConfig::reference().with_ehrs(0).with_waveguides(1);
        raw.num_idrs = 1;
        raw.num_rx_antennas = 1;
        raw.num_pas_per_waveguide = 1;
        let cfg = SystemConfig::new(raw).unwrap();
        let ch = ChannelMatrixSet {
            idr: vec![DMatrix::from_element(1, 1, C64::new(1e-4, 5e-5))],
            ehr: vec![],
        };
        let w0 = BeamformerSet(vec![DMatrix::from_element(1, 1, C64::new(0.3, 0.0))]);
        let out = wmmse_inner_loop(&ch, &w0, &cfg, &InnerSolveSettings { surrogate_rel_tol: 1e-12, ..Default::default() }).unwrap();
        assert!((out.beams.total_power() - cfg.max_power).abs() <= 1e-9 * cfg.max_power);
        let expected = (1.0 + 1.25e-8 * cfg.max_power / cfg.noise_power).log2();
        assert!((out.sum_rate - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn stationary_start_stops_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let cfg = small_cfg(2, 1e-9, 20.0);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let w0 = initial_beams(&ch, &cfg).unwrap();
        let settings = InnerSolveSettings { surrogate_rel_tol: 1e-10, ..Default::default() };
        let first = wmmse_inner_loop(&ch, &w0, &cfg, &settings).unwrap();
        let again = wmmse_inner_loop(&ch, &first.beams, &cfg, &InnerSolveSettings::default()).unwrap();
        assert!(again.iterations <= 2);
        assert!((again.sum_rate - first.sum_rate).abs() <= 1e-4 * first.sum_rate);
    }

    #[test]
    fn inner_loop_is_monotone_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let cfg = small_cfg(2, 2e-9, 20.0);
        for _ in 0..10 {
            let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
            let w0 = initial_beams(&ch, &cfg).unwrap();
            let out = wmmse_inner_loop(&ch, &w0, &cfg, &InnerSolveSettings::default()).unwrap();
            for pair in out.rows.windows(2) {
                assert!(pair[1].sum_rate >= pair[0].sum_rate - 1e-9 * pair[0].sum_rate.max(1.0));
            }
            for row in &out.rows {
                assert!(row.power <= cfg.max_power * (1.0 + 1e-9));
                assert!(row.min_energy_margin >= -1e-6 * cfg.min_energy);
            }
        }
    }

    #[test]
    fn initializer_meets_floors_or_reports_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let ch = random_channels(&mut rng, 4, 3, 2, 2, 1e-4);
        let cfg = small_cfg(2, 1e-8, 20.0);
        let w = initial_beams(&ch, &cfg).unwrap();
        assert!((w.total_power() - 20.0).abs() < 1e-9);
        assert!(is_feasible(&ch, &w, &cfg));
        let cfg = small_cfg(2, 1.0, 20.0);
        assert!(matches!(initial_beams(&ch, &cfg), Err(PassError::InfeasibleScenario(_))));
    }
}
