//! Comparison schemes: ZF beamforming with PA placement, fixed uniform PAs,
//! and a conventional half-wavelength ULA.

use nalgebra::{DMatrix, Point3};

use crate::config::SystemConfig;
use crate::error::{PassError, Result};
use crate::harness::{P1Solution, Phase, Scenario, SolveTrace, SolverSettings, TraceRow};
use crate::inner;
use crate::linalg::{cholesky_hpd, frobenius_sq, identity};
use crate::metrics::{self, BeamformerSet};
use crate::model::{self, antenna_point, ChannelMatrixSet, PinchingLayout, ReceiverLayout};
use crate::position::{self, SweepInputs};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    ZfPass,
    FixedPa,
    ConventionalMimo,
}

/// `l_{m,n} = L_x·n/(N+1)`, `n = 1..N`, on every waveguide.
pub fn fixed_uniform_layout(cfg: &SystemConfig) -> Result<PinchingLayout> {
    let n = cfg.num_pas_per_waveguide;
    let step = cfg.region_length / (n + 1) as f64;
    if step < cfg.min_pa_spacing {
        return Err(PassError::InvalidConfig(format!(
            "uniform spacing {step} m is below the minimum PA spacing {} m",
            cfg.min_pa_spacing
        )));
    }
    let row: Vec<f64> = (1..=n).map(|i| step * i as f64).collect();
    let layout = PinchingLayout::from_rows(&vec![row; cfg.num_waveguides])?;
    let violations = model::validate_layout(&layout, cfg);
    if !violations.is_empty() {
        return Err(PassError::InvalidConfig(format!(
            "uniform layout does not fit the waveguides: {}",
            violations[0]
        )));
    }
    Ok(layout)
}

/// Regularised zero-forcing beams with equal power per stream and total
/// power `P_max`.
pub fn zf_beamformer(ch: &ChannelMatrixSet, cfg: &SystemConfig) -> BeamformerSet {
    let k = ch.idr.len();
    let m = ch.num_tx();
    let j = cfg.num_rx_antennas;
    let nd = cfg.num_streams();
    let mut a = DMatrix::zeros(k * j, m);
    for (i, h) in ch.idr.iter().enumerate() {
        a.view_mut((i * j, 0), (j, m)).copy_from(&h.transpose());
    }
    let gram = &a * a.adjoint();
    let exact = if k * j <= m { cholesky_hpd(&gram) } else { None };
    let full = match exact {
        Some(c) => a.adjoint() * c.inverse(),
        None => {
            let rho = 1e-8 * gram.trace().re / (k * nd) as f64;
            let reg = &gram + identity(k * j).scale(rho.max(f64::MIN_POSITIVE));
            match cholesky_hpd(&reg) {
                Some(c) => a.adjoint() * c.inverse(),
                None => a.adjoint(),
            }
        }
    };
    let mut blocks = Vec::with_capacity(k);
    for i in 0..k {
        let b = full.columns(i * j, j).into_owned();
        let w = if nd == j {
            b
        } else {
            let svd = b.svd(true, false);
            let u = svd.u.expect("left singular vectors requested");
            let mut w = DMatrix::zeros(m, nd);
            for c in 0..nd {
                w.set_column(c, &u.column(c).scale(svd.singular_values[c]));
            }
            w
        };
        blocks.push(w);
    }
    let per_stream = cfg.max_power / (k * nd) as f64;
    let mut live = 0usize;
    for w in &mut blocks {
        for mut col in w.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col.scale_mut(per_stream.sqrt() / norm);
                live += 1;
            }
        }
    }
    let beams = BeamformerSet(blocks);
    if live > 0 && live < k * nd {
        let p = beams.total_power();
        return beams.scaled((cfg.max_power / p).sqrt());
    }
    beams
}

/// Transmit element `i` of the centred half-wavelength ULA.
pub fn ula_point(cfg: &SystemConfig, i: usize) -> Point3<f64> {
    let offset = (i as f64 - (cfg.num_waveguides as f64 - 1.0) / 2.0) * cfg.wavelength() / 2.0;
    Point3::new(cfg.region_length / 2.0 + offset, cfg.region_width / 2.0, cfg.waveguide_height)
}

pub fn conventional_mimo_channels(receivers: &ReceiverLayout, cfg: &SystemConfig) -> ChannelMatrixSet {
    let build = |anchor: (f64, f64)| {
        DMatrix::from_fn(cfg.num_waveguides, cfg.num_rx_antennas, |i, j| {
            let d = nalgebra::distance(&ula_point(cfg, i), &antenna_point(cfg, anchor, j));
            C64::from_polar(cfg.xi() / d, -cfg.kappa() * d)
        })
    };
    ChannelMatrixSet {
        idr: receivers.idrs.iter().map(|&a| build(a)).collect(),
        ehr: receivers.ehrs.iter().map(|&a| build(a)).collect(),
    }
}

fn fixed_channel_solve(
    cfg: &SystemConfig,
    channels: ChannelMatrixSet,
    layout: Option<PinchingLayout>,
    settings: &SolverSettings,
) -> Result<P1Solution> {
    let w0 = inner::initial_beams(&channels, cfg)?;
    let out = inner::wmmse_inner_loop(&channels, &w0, cfg, &settings.inner)?;
    let hash = layout.as_ref().map_or(0, PinchingLayout::snapshot_hash);
    let trace = SolveTrace {
        rows: out
            .rows
            .iter()
            .map(|r| TraceRow {
                outer: 0,
                inner: r.iteration,
                phase: if r.iteration == 0 { Phase::Init } else { Phase::Inner },
                surrogate: r.surrogate,
                sum_rate: r.sum_rate,
                power: r.power,
                min_energy_margin: r.min_energy_margin,
                layout_hash: hash,
            })
            .collect(),
    };
    Ok(P1Solution::assemble(
        cfg,
        out.beams,
        layout,
        channels,
        (0, out.iterations, out.converged),
        trace,
        Vec::new(),
    ))
}

fn zf_pass(scenario: &Scenario, settings: &SolverSettings) -> Result<P1Solution> {
    let cfg = &scenario.config;
    let mut layout = scenario.initial_layout.clone();
    let mut channels = scenario.channels()?;
    let mut trace = SolveTrace::default();
    let mut sweeps = Vec::new();
    let mut beams = zf_beamformer(&channels, cfg);
    let mut rate = metrics::sum_rate(&channels, &beams, cfg.noise_power);
    let row = |outer, phase, ch: &ChannelMatrixSet, w: &BeamformerSet, surrogate: f64, hash| TraceRow {
        outer,
        inner: 0,
        phase,
        surrogate,
        sum_rate: metrics::sum_rate(ch, w, cfg.noise_power),
        power: w.total_power(),
        min_energy_margin: metrics::min_energy_margin(ch, w, cfg),
        layout_hash: hash,
    };
    trace.rows.push(row(0, Phase::Init, &channels, &beams, rate, layout.snapshot_hash()));
    let mut converged = settings.max_outer_iters == 0;
    let mut outer = 0;
    while outer < settings.max_outer_iters {
        outer += 1;
        let st = metrics::wmmse_state(&channels, &beams, cfg.noise_power)?;
        let inputs = SweepInputs {
            beams: &beams,
            filters: &st.filters,
            weights: &st.weights,
            objective: settings.position_objective,
        };
        let (l, ch, report) = position::gauss_seidel_sweep(&layout, &scenario.receivers, &inputs, cfg)?;
        layout = l;
        channels = ch;
        let hash = layout.snapshot_hash();
        trace.rows.push(row(outer, Phase::Sweep, &channels, &beams, report.objective_after(), hash));
        sweeps.push(report);
        beams = zf_beamformer(&channels, cfg);
        let next = metrics::sum_rate(&channels, &beams, cfg.noise_power);
        trace.rows.push(row(outer, Phase::Inner, &channels, &beams, next, hash));
        let rel = (next - rate).abs() / rate.abs().max(1.0);
        rate = next;
        if rel < settings.outer_rel_tol {
            converged = true;
            break;
        }
    }
    Ok(P1Solution::assemble(
        cfg,
        beams,
        Some(layout),
        channels,
        (outer, 0, converged),
        trace,
        sweeps,
    ))
}

/// Runs a comparison scheme on `scenario`. ZF does not enforce the energy
/// floor; check `energy_feasible` on the result.
pub fn run_baseline(kind: BaselineKind, scenario: &Scenario, settings: &SolverSettings) -> Result<P1Solution> {
    settings.inner.validate()?;
    let cfg = &scenario.config;
    match kind {
        BaselineKind::FixedPa => {
            let layout = fixed_uniform_layout(cfg)?;
            let channels = model::build_channels(&layout, &scenario.receivers, cfg)?;
            fixed_channel_solve(cfg, channels, Some(layout), settings)
        }
        BaselineKind::ConventionalMimo => {
            let channels = conventional_mimo_channels(&scenario.receivers, cfg);
            fixed_channel_solve(cfg, channels, None, settings)
        }
        BaselineKind::ZfPass => zf_pass(scenario, settings),
    }
}

/// `‖H_kᵀ W_{k'}‖_F / ‖H_kᵀ W_k‖_F`, maximised over `k' ≠ k`.
pub fn zf_leakage(ch: &ChannelMatrixSet, beams: &BeamformerSet) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, h) in ch.idr.iter().enumerate() {
        let a = h.transpose();
        let own = frobenius_sq(&(&a * &beams.0[k])).sqrt();
        for (kp, w) in beams.0.iter().enumerate() {
            if kp != k {
                worst = worst.max(frobenius_sq(&(&a * w)).sqrt() / own);
            }
        }
    }
    worst
}
