//! Gauss–Seidel grid search over PA positions.
//!
//! Each PA is moved in turn to the grid point that maximises the WMMSE
//! surrogate with the beamformers held fixed. Only the channel entries that
//! depend on the moving PA are recomputed per candidate: the contribution of
//! every other PA on the same waveguide is cached once per update.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{PassError, Result};
use crate::linalg::{cholesky_hpd, frobenius_sq, hermitian_part, identity};
use crate::metrics::{self, BeamformerSet, FilterSet, MseMatrix, WeightSet};
use crate::model::{self, antenna_point, spacing_ok, ChannelMatrixSet, PinchingLayout, ReceiverLayout};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct PositionGrid {
    pub points: Vec<f64>,
}

impl PositionGrid {
    pub fn spacing(&self) -> f64 {
        self.points[1] - self.points[0]
    }
}

pub fn make_grid(cfg: &SystemConfig, m: usize) -> Result<PositionGrid> {
    if m >= cfg.num_waveguides {
        return Err(PassError::IndexOutOfRange(format!("waveguide {m}")));
    }
    let len = cfg.waveguide_length(m);
    let l = cfg.grid_points;
    let step = len / (l - 1) as f64;
    let mut points: Vec<f64> = (0..l).map(|i| i as f64 * step).collect();
    points[l - 1] = len;
    Ok(PositionGrid { points })
}

/// Which receive filters the grid search scores candidates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositionObjective {
    /// `Σ_k f_k(W, U, Λ)` with `U` and `Λ` frozen at the values passed in.
    FixedFilters,
    /// `Σ_k max_U f_k(W, U, Λ)`: the MMSE filter is recomputed for each
    /// candidate while `Λ` stays frozen. Still a lower bound on the sum-rate
    /// that is tight at the current layout.
    #[default]
    RefreshedFilters,
}

/// Frozen beamforming block shared by every candidate of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepInputs<'a> {
    pub beams: &'a BeamformerSet,
    pub filters: &'a FilterSet,
    pub weights: &'a WeightSet,
    pub objective: PositionObjective,
}

/// Channels with the contribution of PA `(m, n)` removed from row `m`.
struct PaContext<'a> {
    cfg: &'a SystemConfig,
    m: usize,
    base: ChannelMatrixSet,
    idr_antennas: Vec<Vec<nalgebra::Point3<f64>>>,
    ehr_antennas: Vec<Vec<nalgebra::Point3<f64>>>,
}

fn antennas(cfg: &SystemConfig, anchors: &[(f64, f64)]) -> Vec<Vec<nalgebra::Point3<f64>>> {
    anchors
        .iter()
        .map(|&a| (0..cfg.num_rx_antennas).map(|j| antenna_point(cfg, a, j)).collect())
        .collect()
}

impl<'a> PaContext<'a> {
    fn new(
        cfg: &'a SystemConfig,
        layout: &PinchingLayout,
        receivers: &ReceiverLayout,
        channels: &ChannelMatrixSet,
        m: usize,
        n: usize,
    ) -> Result<Self> {
        let idr_antennas = antennas(cfg, &receivers.idrs);
        let ehr_antennas = antennas(cfg, &receivers.ehrs);
        let mut others = layout.row(m);
        others.remove(n);
        let mut base = channels.clone();
        for (h, ants) in base.idr.iter_mut().zip(&idr_antennas).chain(base.ehr.iter_mut().zip(&ehr_antennas)) {
            for (j, p) in ants.iter().enumerate() {
                h[(m, j)] = model::effective_channel(cfg, m, &others, p)?;
            }
        }
        Ok(PaContext { cfg, m, base, idr_antennas, ehr_antennas })
    }

    fn channels_at(&self, l: f64) -> Result<ChannelMatrixSet> {
        let mut ch = self.base.clone();
        let m = self.m;
        for (h, ants) in ch.idr.iter_mut().zip(&self.idr_antennas).chain(ch.ehr.iter_mut().zip(&self.ehr_antennas)) {
            for (j, p) in ants.iter().enumerate() {
                h[(m, j)] += model::pa_contribution(self.cfg, m, l, p)?;
            }
        }
        Ok(ch)
    }
}

/// Surrogate of the whole system over frozen `(W, U, Λ)` at channels `ch`.
pub fn objective_at(ch: &ChannelMatrixSet, inputs: &SweepInputs<'_>, sigma2: f64) -> f64 {
    match inputs.objective {
        PositionObjective::FixedFilters => {
            metrics::sum_surrogate(ch, inputs.beams, inputs.filters, inputs.weights, sigma2)
        }
        PositionObjective::RefreshedFilters => (0..inputs.beams.num_idrs())
            .map(|k| refreshed_surrogate(ch, inputs.beams, &inputs.weights.0[k], k, sigma2))
            .sum(),
    }
}

fn refreshed_surrogate(ch: &ChannelMatrixSet, beams: &BeamformerSet, lambda: &DMatrix<C64>, k: usize, sigma2: f64) -> f64 {
    let a = ch.idr[k].transpose();
    let mut c = identity(a.nrows()).scale(sigma2);
    for w in &beams.0 {
        let aw = &a * w;
        c += &aw * aw.adjoint();
    }
    let aw = &a * &beams.0[k];
    let Some(chol) = cholesky_hpd(&hermitian_part(&c)) else {
        return f64::NAN;
    };
    let v = identity(aw.ncols()) - aw.adjoint() * chol.solve(&aw);
    metrics::surrogate_from_mse(&MseMatrix(hermitian_part(&v)), lambda)
}

/// Candidate surrogate with PA `(m, n)` moved to `l`, all else fixed.
#[allow(clippy::too_many_arguments)]
pub fn candidate_objective(
    layout: &PinchingLayout,
    receivers: &ReceiverLayout,
    channels: &ChannelMatrixSet,
    m: usize,
    n: usize,
    l: f64,
    inputs: &SweepInputs<'_>,
    cfg: &SystemConfig,
) -> Result<f64> {
    let ctx = PaContext::new(cfg, layout, receivers, channels, m, n)?;
    Ok(objective_at(&ctx.channels_at(l)?, inputs, cfg.noise_power))
}

fn energies(ch: &ChannelMatrixSet, beams: &BeamformerSet, cfg: &SystemConfig) -> Vec<f64> {
    ch.ehr
        .iter()
        .enumerate()
        .map(|(q, g)| {
            let b = g.transpose();
            cfg.harvest_efficiency[q] * beams.0.iter().map(|w| frobenius_sq(&(&b * w))).sum::<f64>()
        })
        .collect()
}

/// Per-EHR `E_q ≥ E_min` with PA `(m, n)` moved to `l`.
#[allow(clippy::too_many_arguments)]
pub fn candidate_energy_feasible(
    layout: &PinchingLayout,
    receivers: &ReceiverLayout,
    channels: &ChannelMatrixSet,
    m: usize,
    n: usize,
    l: f64,
    beams: &BeamformerSet,
    cfg: &SystemConfig,
) -> Result<Vec<bool>> {
    let ctx = PaContext::new(cfg, layout, receivers, channels, m, n)?;
    Ok(energies(&ctx.channels_at(l)?, beams, cfg)
        .into_iter()
        .map(|e| e >= cfg.min_energy)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaUpdate {
    pub waveguide: usize,
    pub pa: usize,
    pub previous: f64,
    pub chosen: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    /// Grid points passing the spacing and energy filters.
    pub feasible_points: usize,
    /// No grid point passed the filters; the PA stayed put.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub updates: Vec<PaUpdate>,
}

impl SweepReport {
    pub fn objective_before(&self) -> f64 {
        self.updates.first().map_or(f64::NAN, |u| u.objective_before)
    }

    pub fn objective_after(&self) -> f64 {
        self.updates.last().map_or(f64::NAN, |u| u.objective_after)
    }

    pub fn moved(&self) -> usize {
        self.updates.iter().filter(|u| u.chosen != u.previous).count()
    }
}

/// Relative window within which two candidate values count as tied.
pub const TIE_TOL: f64 = 1e-12;

struct Scored {
    l: f64,
    value: f64,
    margin: f64,
}

/// Moves PA `(m, n)` to its best admissible grid point, updating `layout`
/// and `channels` in place.
#[allow(clippy::too_many_arguments)]
pub fn update_pa(
    layout: &mut PinchingLayout,
    receivers: &ReceiverLayout,
    channels: &mut ChannelMatrixSet,
    m: usize,
    n: usize,
    inputs: &SweepInputs<'_>,
    grid: &PositionGrid,
    cfg: &SystemConfig,
) -> Result<PaUpdate> {
    let sigma2 = cfg.noise_power;
    let current = layout.get(m, n);
    let before = objective_at(channels, inputs, sigma2);
    let margin_now = margin(&energies(channels, inputs.beams, cfg), cfg);
    let threshold = margin_now.min(0.0);

    let prev = (n > 0).then(|| layout.get(m, n - 1));
    let next = (n + 1 < layout.num_pas()).then(|| layout.get(m, n + 1));
    let admissible = |l: f64| {
        prev.is_none_or(|p| spacing_ok(cfg, p, l)) && next.is_none_or(|q| spacing_ok(cfg, l, q))
    };
    let candidates: Vec<f64> = grid.points.iter().copied().filter(|&l| l != current && admissible(l)).collect();

    let ctx = PaContext::new(cfg, layout, receivers, channels, m, n)?;
    let scored: Vec<Scored> = candidates
        .par_iter()
        .map(|&l| -> Result<Scored> {
            let ch = ctx.channels_at(l)?;
            Ok(Scored {
                l,
                value: objective_at(&ch, inputs, sigma2),
                margin: margin(&energies(&ch, inputs.beams, cfg), cfg),
            })
        })
        .collect::<Result<_>>()?;
    let mut pool: Vec<Scored> = scored
        .into_iter()
        .filter(|s| s.value.is_finite() && s.margin >= threshold)
        .collect();
    let feasible_points = pool.len();
    pool.push(Scored { l: current, value: before, margin: margin_now });

    let top = pool.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * top.abs().max(1.0);
    let best = pool
        .iter()
        .filter(|s| s.value >= top - tol)
        .min_by(|a, b| a.l.total_cmp(&b.l))
        .expect("pool holds the current position");
    let (best_l, best_v) = (best.l, best.value);

    if best_l != current {
        layout.set(m, n, best_l);
        *channels = ctx.channels_at(best_l)?;
    }
    Ok(PaUpdate {
        waveguide: m,
        pa: n,
        previous: current,
        chosen: best_l,
        objective_before: before,
        objective_after: best_v,
        feasible_points,
        skipped: feasible_points == 0,
    })
}

fn margin(e: &[f64], cfg: &SystemConfig) -> f64 {
    e.iter().map(|x| x - cfg.min_energy).fold(f64::INFINITY, f64::min)
}

/// One pass of [`update_pa`] over all PAs, waveguide-major.
pub fn gauss_seidel_sweep(
    layout: &PinchingLayout,
    receivers: &ReceiverLayout,
    inputs: &SweepInputs<'_>,
    cfg: &SystemConfig,
) -> Result<(PinchingLayout, ChannelMatrixSet, SweepReport)> {
    let mut layout = layout.clone();
    let mut channels = model::build_channels(&layout, receivers, cfg)?;
    let mut report = SweepReport::default();
    for m in 0..cfg.num_waveguides {
        let grid = make_grid(cfg, m)?;
        for n in 0..cfg.num_pas_per_waveguide {
            report
                .updates
                .push(update_pa(&mut layout, receivers, &mut channels, m, n, inputs, &grid, cfg)?);
        }
    }
    Ok((layout, channels, report))
}

#[cfg(test)]
fn refreshed_objective_reference(ch: &ChannelMatrixSet, beams: &BeamformerSet, weights: &WeightSet, sigma2: f64) -> f64 {
    (0..beams.num_idrs())
        .map(|k| {
            let u = metrics::optimal_filter(ch, beams, k, sigma2);
            let v = metrics::mse_matrix(ch, beams, &u, k, sigma2);
            let lambda = &weights.0[k];
            match crate::linalg::ln_det_hpd(lambda) {
                Ok(ld) => (ld - crate::linalg::re_inner(&lambda.adjoint(), &v.0) + lambda.nrows() as f64) / std::f64::consts::LN_2,
                Err(_) => f64::NAN,
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;
    use crate::model::validate_layout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_case(seed: u64) -> (SystemConfig, PinchingLayout, ReceiverLayout, BeamformerSet) {
        let mut raw = RawConfig::reference();
        raw.grid_points = 301;
        let cfg = SystemConfig::new(raw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xmax = cfg.max_anchor_x();
        let mut anchor = || (rng.random_range(0.0..xmax), rng.random_range(0.0..cfg.region_width));
        let receivers = ReceiverLayout {
            idrs: vec![anchor(), anchor()],
            ehrs: vec![anchor(), anchor()],
        };
        let rows: Vec<Vec<f64>> = (0..4).map(|_| vec![7.5, 15.0, 22.5]).collect();
        let layout = PinchingLayout::from_rows(&rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let beams = crate::testutil::random_beams(&mut rng, 2, 4, 3, 1.0);
        let beams = beams.scaled((cfg.max_power / beams.total_power()).sqrt());
        (cfg, layout, receivers, beams)
    }

    #[test]
    fn grids() {
        let mut raw = RawConfig::reference();
        raw.grid_points = 2;
        let cfg = SystemConfig::new(raw.clone()).unwrap();
        assert_eq!(make_grid(&cfg, 0).unwrap().points, vec![0.0, 30.0]);
        raw.grid_points = 2001;
        let g = make_grid(&SystemConfig::new(raw.clone()).unwrap(), 3).unwrap();
        assert_eq!(g.points.len(), 2001);
        assert!((g.spacing() - 0.015).abs() < 1e-15);
        assert_eq!(*g.points.last().unwrap(), 30.0);
        raw.grid_points = 3;
        raw.region_length = 1.0;
        raw.waveguide_lengths = vec![1.0; 4];
        raw.num_pas_per_waveguide = 1;
        assert_eq!(make_grid(&SystemConfig::new(raw).unwrap(), 0).unwrap().points, vec![0.0, 0.5, 1.0]);
        assert!(make_grid(&cfg, 4).is_err());
    }

    #[test]
    fn incremental_matches_full_recompute() {
        for objective in [PositionObjective::FixedFilters, PositionObjective::RefreshedFilters] {
            let (cfg, layout, receivers, beams) = reference_case(5);
            let ch = model::build_channels(&layout, &receivers, &cfg).unwrap();
            let st = metrics::wmmse_state(&ch, &beams, cfg.noise_power).unwrap();
            let inputs = SweepInputs { beams: &beams, filters: &st.filters, weights: &st.weights, objective };
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for _ in 0..25 {
                let m = rng.random_range(0..4);
                let n = rng.random_range(0..3);
                let lo = if n == 0 { 0.0 } else { layout.get(m, n - 1) + cfg.min_pa_spacing };
                let hi = if n == 2 { 30.0 } else { layout.get(m, n + 1) - cfg.min_pa_spacing };
                let l = rng.random_range(lo..hi);
                let inc = candidate_objective(&layout, &receivers, &ch, m, n, l, &inputs, &cfg).unwrap();
                let mut moved = layout.clone();
                moved.set(m, n, l);
                let full_ch = model::build_channels(&moved, &receivers, &cfg).unwrap();
                let full = match objective {
                    PositionObjective::FixedFilters => {
                        metrics::sum_surrogate(&full_ch, &beams, &st.filters, &st.weights, cfg.noise_power)
                    }
                    PositionObjective::RefreshedFilters => {
                        refreshed_objective_reference(&full_ch, &beams, &st.weights, cfg.noise_power)
                    }
                };
                assert!((inc - full).abs() <= 1e-9 * full.abs().max(1.0), "{inc} vs {full}");
            }
        }
    }

    #[test]
    fn current_position_reproduces_surrogate() {
        let (cfg, layout, receivers, beams) = reference_case(7);
        let ch = model::build_channels(&layout, &receivers, &cfg).unwrap();
        let st = metrics::wmmse_state(&ch, &beams, cfg.noise_power).unwrap();
        let inputs = SweepInputs {
            beams: &beams,
            filters: &st.filters,
            weights: &st.weights,
            objective: PositionObjective::FixedFilters,
        };
        let v = candidate_objective(&layout, &receivers, &ch, 1, 1, 15.0, &inputs, &cfg).unwrap();
        let full = metrics::sum_surrogate(&ch, &beams, &st.filters, &st.weights, cfg.noise_power);
        assert!((v - full).abs() <= 1e-12 * full.abs());
    }

    #[test]
    fn energy_filter_matches_full_recompute() {
        let (cfg, layout, receivers, beams) = reference_case(8);
        let ch = model::build_channels(&layout, &receivers, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let l = rng.random_range(0.0..7.0);
            let flags = candidate_energy_feasible(&layout, &receivers, &ch, 2, 0, l, &beams, &cfg).unwrap();
            let mut moved = layout.clone();
            moved.set(2, 0, l);
            let full = metrics::harvested_energies(&model::build_channels(&moved, &receivers, &cfg).unwrap(), &beams, &cfg);
            for (f, e) in flags.iter().zip(&full) {
                if (e - cfg.min_energy).abs() > 1e-12 {
                    assert_eq!(*f, *e >= cfg.min_energy);
                }
            }
        }
        let zero = BeamformerSet::zeros(2, 4, 3);
        let flags = candidate_energy_feasible(&layout, &receivers, &ch, 0, 0, 3.0, &zero, &cfg).unwrap();
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn pinned_pa_does_not_move() {
        let (cfg, _, receivers, beams) = reference_case(10);
        let l0 = cfg.min_pa_spacing;
        let rows: Vec<Vec<f64>> = (0..4).map(|_| vec![10.0 - l0, 10.0, 10.0 + l0]).collect();
        let mut layout = PinchingLayout::from_rows(&rows).unwrap();
        let mut ch = model::build_channels(&layout, &receivers, &cfg).unwrap();
        let st = metrics::wmmse_state(&ch, &beams, cfg.noise_power).unwrap();
        let inputs = SweepInputs { beams: &beams, filters: &st.filters, weights: &st.weights, objective: Default::default() };
        let grid = make_grid(&cfg, 0).unwrap();
        let upd = update_pa(&mut layout, &receivers, &mut ch, 0, 1, &inputs, &grid, &cfg).unwrap();
        assert_eq!(upd.chosen, 10.0);
        assert!(upd.skipped);
        assert_eq!(layout.get(0, 1), 10.0);
    }

    fn scalar_cfg(grid_points: usize) -> SystemConfig {
        let mut raw = RawConfig::reference().with_ehrs(0).with_waveguides(1);
        raw.num_idrs = 1;
        raw.num_rx_antennas = 1;
        raw.num_pas_per_waveguide = 1;
        raw.grid_points = grid_points;
        SystemConfig::new(raw).unwrap()
    }

    #[test]
    fn scalar_case_picks_nearest_grid_point() {
        let cfg = scalar_cfg(2001);
        let receivers = ReceiverLayout { idrs: vec![(12.3456, 2.0)], ehrs: vec![] };
        let mut layout = PinchingLayout::from_rows(&[vec![15.0]]).unwrap();
        let mut ch = model::build_channels(&layout, &receivers, &cfg).unwrap();
        let beams = BeamformerSet(vec![DMatrix::from_element(1, 1, C64::new(cfg.max_power.sqrt(), 0.0))]);
        let st = metrics::wmmse_state(&ch, &beams, cfg.noise_power).unwrap();
        let inputs = SweepInputs { beams: &beams, filters: &st.filters, weights: &st.weights, objective: Default::default() };
        let grid = make_grid(&cfg, 0).unwrap();
        update_pa(&mut layout, &receivers, &mut ch, 0, 0, &inputs, &grid, &cfg).unwrap();
        let nearest = grid
            .points
            .iter()
            .copied()
            .min_by(|a, b| (a - 12.3456f64).abs().total_cmp(&(b - 12.3456f64).abs()))
            .unwrap();
        assert_eq!(layout.get(0, 0), nearest);
    }

    #[test]
    fn ties_resolve_to_smallest_position() {
        // receiver centred between two grid points: both are equally close
        let cfg = scalar_cfg(3);
        let receivers = ReceiverLayout { idrs: vec![(22.5, 0.0)], ehrs: vec![] };
        let beams = BeamformerSet(vec![DMatrix::from_element(1, 1, C64::new(1.0, 0.0))]);
        let mut layout = PinchingLayout::from_rows(&[vec![0.0]]).unwrap();
        let mut ch = model::build_channels(&layout, &receivers, &cfg).unwrap();
        let st = metrics::wmmse_state(&ch, &beams, cfg.noise_power).unwrap();
        let inputs = SweepInputs { beams: &beams, filters: &st.filters, weights: &st.weights, objective: Default::default() };
        let grid = make_grid(&cfg, 0).unwrap();
        update_pa(&mut layout, &receivers, &mut ch, 0, 0, &inputs, &grid, &cfg).unwrap();
        assert_eq!(layout.get(0, 0), 15.0);
    }

    #[test]
    fn sweeps_are_monotone_and_valid() {
        for seed in 0..5 {
            let (cfg, layout, receivers, beams) = reference_case(20 + seed);
            let ch = model::build_channels(&layout, &receivers, &cfg).unwrap();
            let st = metrics::wmmse_state(&ch, &beams, cfg.noise_power).unwrap();
            let inputs = SweepInputs { beams: &beams, filters: &st.filters, weights: &st.weights, objective: Default::default() };
            let margin0 = metrics::min_energy_margin(&ch, &beams, &cfg);
            let (out, ch2, report) = gauss_seidel_sweep(&layout, &receivers, &inputs, &cfg).unwrap();
            assert!(validate_layout(&out, &cfg).is_empty());
            assert_eq!(report.updates.len(), 12);
            for u in &report.updates {
                assert!(u.objective_after >= u.objective_before - 1e-9);
            }
            for pair in report.updates.windows(2) {
                assert!((pair[1].objective_before - pair[0].objective_after).abs() <= 1e-9 * pair[0].objective_after.abs().max(1.0));
            }
            let rebuilt = model::build_channels(&out, &receivers, &cfg).unwrap();
            assert!((rebuilt.idr[0].clone() - &ch2.idr[0]).norm() <= 1e-12 * rebuilt.idr[0].norm());
            let margin1 = metrics::min_energy_margin(&rebuilt, &beams, &cfg);
            assert!(margin1 >= margin0.min(0.0) - 1e-18);
            let r0 = metrics::sum_rate(&ch, &beams, cfg.noise_power);
            let r1 = metrics::sum_rate(&rebuilt, &beams, cfg.noise_power);
            assert!(r1 >= r0 - 1e-9 * r0.max(1.0));
        }
    }
}
