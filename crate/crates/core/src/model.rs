//! Geometry and the free-space line-of-sight channel of a pinching-antenna
//! system.
//!
//! Waveguide `m` (0-based) runs along the x-axis at `y = m·d`, height `a`, and
//! is fed at `x = 0`. Receiver antenna `j` (0-based) of an anchor `(x, y)` sits
//! at `(x + j·d_s, y, 0)`.

use std::fmt;

use nalgebra::{DMatrix, Point3};

use crate::config::SystemConfig;
use crate::error::{PassError, Result};
use crate::C64;

/// PA positions `l_{m,n}` along each waveguide; row `m` is waveguide `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PinchingLayout {
    positions: DMatrix<f64>,
}

impl PinchingLayout {
    pub fn new(positions: DMatrix<f64>) -> Self {
        PinchingLayout { positions }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(PassError::InvalidConfig("layout rows have unequal lengths".into()));
        }
        Ok(PinchingLayout {
            positions: DMatrix::from_fn(rows.len(), n, |m, i| rows[m][i]),
        })
    }

    pub fn num_waveguides(&self) -> usize {
        self.positions.nrows()
    }

    pub fn num_pas(&self) -> usize {
        self.positions.ncols()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.positions[(m, n)]
    }

    pub fn set(&mut self, m: usize, n: usize, l: f64) {
        self.positions[(m, n)] = l;
    }

    /// Positions on waveguide `m`.
    pub fn row(&self, m: usize) -> Vec<f64> {
        self.positions.row(m).iter().copied().collect()
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    /// Stable 64-bit FNV-1a digest of the position bits, for trace snapshots.
    pub fn snapshot_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in 0..self.num_waveguides() {
            for n in 0..self.num_pas() {
                for b in self.get(m, n).to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Receiver ULA start points on the ground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverLayout {
    pub idrs: Vec<(f64, f64)>,
    pub ehrs: Vec<(f64, f64)>,
}

impl ReceiverLayout {
    /// Checks anchor counts and that every antenna stays inside the service area.
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.idrs.len() != cfg.num_idrs || self.ehrs.len() != cfg.num_ehrs {
            return Err(PassError::InvalidConfig(format!(
                "receiver layout has {} IDRs / {} EHRs, config expects {} / {}",
                self.idrs.len(),
                self.ehrs.len(),
                cfg.num_idrs,
                cfg.num_ehrs
            )));
        }
        let xmax = cfg.max_anchor_x();
        for &(x, y) in self.idrs.iter().chain(&self.ehrs) {
            if !(0.0..=xmax).contains(&x) || !(0.0..=cfg.region_width).contains(&y) {
                return Err(PassError::InvalidConfig(format!(
                    "receiver anchor ({x}, {y}) outside [0, {xmax}] x [0, {}]",
                    cfg.region_width
                )));
            }
        }
        Ok(())
    }
}

/// Position of antenna `j` of a ULA anchored at `anchor`.
pub fn antenna_point(cfg: &SystemConfig, anchor: (f64, f64), j: usize) -> Point3<f64> {
    Point3::new(anchor.0 + j as f64 * cfg.rx_antenna_spacing, anchor.1, 0.0)
}

/// Channel matrices for one layout: `idr[k]` and `ehr[q]` are `M × J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrixSet {
    pub idr: Vec<DMatrix<C64>>,
    pub ehr: Vec<DMatrix<C64>>,
}

impl ChannelMatrixSet {
    pub fn num_tx(&self) -> usize {
        self.idr.first().or(self.ehr.first()).map_or(0, DMatrix::nrows)
    }
}

fn check_waveguide(cfg: &SystemConfig, m: usize) -> Result<()> {
    if m >= cfg.num_waveguides {
        return Err(PassError::IndexOutOfRange(format!(
            "waveguide {m} (config has {})",
            cfg.num_waveguides
        )));
    }
    Ok(())
}

/// Location of a PA at distance `l` along waveguide `m`.
pub fn pa_point(cfg: &SystemConfig, m: usize, l: f64) -> Result<Point3<f64>> {
    check_waveguide(cfg, m)?;
    Ok(Point3::new(l, m as f64 * cfg.waveguide_spacing, cfg.waveguide_height))
}

pub fn distance(cfg: &SystemConfig, m: usize, l: f64, antenna: &Point3<f64>) -> Result<f64> {
    Ok(nalgebra::distance(&pa_point(cfg, m, l)?, antenna))
}

/// Free-space coefficient `ξ·exp(−jκD)/D` between a PA and an antenna.
pub fn channel_coefficient(cfg: &SystemConfig, m: usize, l: f64, antenna: &Point3<f64>) -> Result<C64> {
    let d = distance(cfg, m, l, antenna)?;
    Ok(C64::from_polar(cfg.xi() / d, -cfg.kappa() * d))
}

/// Contribution of one PA to the effective waveguide channel, including the
/// in-waveguide phase `κ·ι_ref·l` and the equal power split `1/√N`.
pub fn pa_contribution(cfg: &SystemConfig, m: usize, l: f64, antenna: &Point3<f64>) -> Result<C64> {
    let d = distance(cfg, m, l, antenna)?;
    let n = cfg.num_pas_per_waveguide as f64;
    Ok(C64::from_polar(
        cfg.xi() / (n.sqrt() * d),
        -cfg.kappa() * (d + cfg.refractive_index * l),
    ))
}

/// Effective channel between waveguide `m` with PAs at `positions` and one antenna.
pub fn effective_channel(cfg: &SystemConfig, m: usize, positions: &[f64], antenna: &Point3<f64>) -> Result<C64> {
    positions
        .iter()
        .map(|&l| pa_contribution(cfg, m, l, antenna))
        .sum()
}

fn receiver_matrix(
    cfg: &SystemConfig,
    layout: &PinchingLayout,
    anchor: (f64, f64),
) -> Result<DMatrix<C64>> {
    let mut h = DMatrix::zeros(cfg.num_waveguides, cfg.num_rx_antennas);
    for m in 0..cfg.num_waveguides {
        let row = layout.row(m);
        for j in 0..cfg.num_rx_antennas {
            h[(m, j)] = effective_channel(cfg, m, &row, &antenna_point(cfg, anchor, j))?;
        }
    }
    Ok(h)
}

/// Builds `H_k` and `G_q` for a layout; rejects layouts that violate the box
/// or spacing constraints.
pub fn build_channels(
    layout: &PinchingLayout,
    receivers: &ReceiverLayout,
    cfg: &SystemConfig,
) -> Result<ChannelMatrixSet> {
    if layout.num_waveguides() != cfg.num_waveguides || layout.num_pas() != cfg.num_pas_per_waveguide {
        return Err(PassError::InvalidConfig(format!(
            "layout is {}x{}, config expects {}x{}",
            layout.num_waveguides(),
            layout.num_pas(),
            cfg.num_waveguides,
            cfg.num_pas_per_waveguide
        )));
    }
    let violations = validate_layout(layout, cfg);
    if !violations.is_empty() {
        return Err(PassError::LayoutViolation(violations));
    }
    Ok(ChannelMatrixSet {
        idr: receivers
            .idrs
            .iter()
            .map(|&a| receiver_matrix(cfg, layout, a))
            .collect::<Result<_>>()?,
        ehr: receivers
            .ehrs
            .iter()
            .map(|&a| receiver_matrix(cfg, layout, a))
            .collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementConstraint {
    /// `0 ≤ l_{m,n} ≤ L_m`
    Bounds,
    /// `l_{m,n} − l_{m,n−1} ≥ L_0`
    Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutViolation {
    pub constraint: PlacementConstraint,
    pub waveguide: usize,
    pub pa: usize,
    pub value: f64,
}

impl fmt::Display for LayoutViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constraint {
            PlacementConstraint::Bounds => write!(
                f,
                "PA ({}, {}) at {} m is outside the waveguide",
                self.waveguide, self.pa, self.value
            ),
            PlacementConstraint::Spacing => write!(
                f,
                "PA ({}, {}) is {} m from its predecessor",
                self.waveguide, self.pa, self.value
            ),
        }
    }
}

/// True when `l` may sit on waveguide `m` after a PA at `prev` (if any).
pub(crate) fn spacing_ok(cfg: &SystemConfig, prev: f64, l: f64) -> bool {
    l - prev >= cfg.min_pa_spacing
}

/// Lists every bound and spacing violation; empty iff the layout is admissible.
pub fn validate_layout(layout: &PinchingLayout, cfg: &SystemConfig) -> Vec<LayoutViolation> {
    let mut out = Vec::new();
    for m in 0..layout.num_waveguides() {
        let len = cfg.waveguide_lengths.get(m).copied().unwrap_or(cfg.region_length);
        for n in 0..layout.num_pas() {
            let l = layout.get(m, n);
            if !(l.is_finite() && (0.0..=len).contains(&l)) {
                out.push(LayoutViolation {
                    constraint: PlacementConstraint::Bounds,
                    waveguide: m,
                    pa: n,
                    value: l,
                });
            }
            if n > 0 {
                let prev = layout.get(m, n - 1);
                if !spacing_ok(cfg, prev, l) {
                    out.push(LayoutViolation {
                        constraint: PlacementConstraint::Spacing,
                        waveguide: m,
                        pa: n,
                        value: l - prev,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn cfg() -> SystemConfig {
        SystemConfig::reference()
    }

    #[test]
    fn pa_points() {
        let c = cfg();
        assert_eq!(pa_point(&c, 0, 0.0).unwrap(), Point3::new(0.0, 0.0, 5.0));
        let p = pa_point(&c, 3, 30.0).unwrap();
        assert_eq!(p, Point3::new(30.0, 6.0, 5.0));
        let mut raw = RawConfig::reference();
        raw.waveguide_spacing = 2.0;
        let c2 = SystemConfig::new(raw).unwrap();
        assert_eq!(pa_point(&c2, 2, 7.5).unwrap(), Point3::new(7.5, 4.0, 5.0));
        assert!(matches!(pa_point(&c, 4, 0.0), Err(PassError::IndexOutOfRange(_))));
    }

    #[test]
    fn distance_directly_above() {
        let c = cfg();
        let ant = Point3::new(12.0, 2.0, 0.0);
        assert_eq!(distance(&c, 1, 12.0, &ant).unwrap(), 5.0);
    }

    #[test]
    fn three_four_five() {
        let mut raw = RawConfig::reference();
        raw.waveguide_height = 1e-300;
        let c = SystemConfig::new(raw).unwrap();
        let ant = Point3::new(0.0, 0.0, 0.0);
        // waveguide 2 sits at y = 4
        assert!((distance(&c, 2, 3.0, &ant).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn coefficient_above_antenna_matches_extended_precision() {
        let c = cfg();
        let ant = Point3::new(10.0, 0.0, 0.0);
        let h = channel_coefficient(&c, 0, 10.0, &ant).unwrap();
        // mpmath (40 digits): xi/5·exp(−j·5κ)
        let re = 1.687818418137728e-4;
        let im = 2.349633486749029e-5;
        assert!((h - C64::new(re, im)).norm() < 1e-11 * h.norm());
        assert!((h.norm() - c.xi() / 5.0).abs() < 1e-18);
    }

    #[test]
    fn phase_wraps_at_one_wavelength() {
        let c = cfg();
        let lambda = c.wavelength();
        // D = 5 + ε with κD a multiple of 2π
        let d = (5.0 / lambda).ceil() * lambda;
        let dx = (d * d - 25.0).sqrt();
        let ant = Point3::new(dx, 0.0, 0.0);
        let h = channel_coefficient(&c, 0, 0.0, &ant).unwrap();
        assert!(h.im.abs() / h.norm() < 1e-6);
        assert!(h.re > 0.0);
    }

    #[test]
    fn single_pa_effective_channel() {
        let mut raw = RawConfig::reference();
        raw.num_pas_per_waveguide = 1;
        let c = SystemConfig::new(raw).unwrap();
        let ant = Point3::new(4.0, 1.0, 0.0);
        let l = 6.3;
        let h = effective_channel(&c, 1, &[l], &ant).unwrap();
        let base = channel_coefficient(&c, 1, l, &ant).unwrap();
        let expected = base * C64::from_polar(1.0, -c.kappa() * c.refractive_index * l);
        assert!((h - expected).norm() < 1e-12 * expected.norm());
        assert!((h.norm() - base.norm()).abs() < 1e-16);
    }

    #[test]
    fn uniform_layout_valid_and_zero_spacing_flagged() {
        let c = cfg();
        let rows = vec![vec![7.5, 15.0, 22.5]; 4];
        let layout = PinchingLayout::from_rows(&rows).unwrap();
        assert!(validate_layout(&layout, &c).is_empty());

        let mut bad = layout.clone();
        bad.set(1, 1, 7.5);
        let v = validate_layout(&bad, &c);
        assert_eq!(v.len(), 1);
        assert!(v.iter().any(|x| x.constraint == PlacementConstraint::Spacing && x.waveguide == 1 && x.pa == 1));

        let mut over = layout.clone();
        over.set(2, 2, 30.0 + 1e-9);
        let v = validate_layout(&over, &c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, PlacementConstraint::Bounds);
        assert_eq!((v[0].waveguide, v[0].pa), (2, 2));
        assert!(matches!(
            build_channels(&over, &ReceiverLayout { idrs: vec![(1.0, 1.0); 2], ehrs: vec![(2.0, 2.0); 2] }, &c),
            Err(PassError::LayoutViolation(_))
        ));
    }
}
