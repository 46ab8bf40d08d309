//! Scenario parameters and their derived propagation constants.
//!
//! All quantities are SI (Hz, m, W). Powers in configuration files carry an
//! explicit unit suffix (`"43 dBm"` or `"20 W"`); see [`ConfigFile`].

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{PassError, Result};

/// Speed of light used throughout, in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Scenario parameters before derived constants are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    pub carrier_frequency: f64,
    pub speed_of_light: f64,
    pub num_waveguides: usize,
    pub num_pas_per_waveguide: usize,
    pub num_idrs: usize,
    pub num_ehrs: usize,
    pub num_rx_antennas: usize,
    pub rx_antenna_spacing: f64,
    pub waveguide_height: f64,
    pub waveguide_spacing: f64,
    pub region_length: f64,
    pub region_width: f64,
    pub min_pa_spacing: f64,
    /// One length per waveguide.
    pub waveguide_lengths: Vec<f64>,
    pub refractive_index: f64,
    pub noise_power: f64,
    pub max_power: f64,
    pub min_energy: f64,
    /// One transducer efficiency per EHR.
    pub harvest_efficiency: Vec<f64>,
    pub grid_points: usize,
}

impl RawConfig {
    /// The reference scenario: 28 GHz, four waveguides with three PAs each,
    /// two IDRs and two EHRs with three-antenna ULAs over a 30 m × 6 m area.
    pub fn reference() -> Self {
        let fc = 28e9;
        let lambda = SPEED_OF_LIGHT / fc;
        let m = 4;
        let q = 2;
        let lx = 30.0;
        let ly = 6.0;
        RawConfig {
            carrier_frequency: fc,
            speed_of_light: SPEED_OF_LIGHT,
            num_waveguides: m,
            num_pas_per_waveguide: 3,
            num_idrs: 2,
            num_ehrs: q,
            num_rx_antennas: 3,
            rx_antenna_spacing: lambda / 2.0,
            waveguide_height: 5.0,
            waveguide_spacing: ly / (m as f64 - 1.0),
            region_length: lx,
            region_width: ly,
            min_pa_spacing: lambda / 2.0,
            waveguide_lengths: vec![lx; m],
            refractive_index: 1.44,
            noise_power: dbm_to_watts(-50.0),
            max_power: dbm_to_watts(43.0),
            min_energy: 0.5e-7,
            harvest_efficiency: vec![0.5; q],
            grid_points: 2001,
        }
    }

    /// Changes the waveguide count, recomputing the spacing as `L_y/(M−1)`
    /// and resizing the per-waveguide lengths.
    pub fn with_waveguides(mut self, m: usize) -> Self {
        self.num_waveguides = m;
        self.waveguide_spacing = default_waveguide_spacing(self.region_width, m);
        let len = self.waveguide_lengths.first().copied().unwrap_or(self.region_length);
        self.waveguide_lengths = vec![len; m];
        self
    }

    /// Changes the EHR count, resizing the efficiency vector with the first entry.
    pub fn with_ehrs(mut self, q: usize) -> Self {
        let eta = self.harvest_efficiency.first().copied().unwrap_or(0.5);
        self.num_ehrs = q;
        self.harvest_efficiency = vec![eta; q];
        self
    }
}

fn default_waveguide_spacing(width: f64, m: usize) -> f64 {
    if m > 1 {
        width / (m as f64 - 1.0)
    } else {
        width
    }
}

/// Validated scenario parameters with derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    raw: RawConfig,
    xi: f64,
    kappa: f64,
}

impl std::ops::Deref for SystemConfig {
    type Target = RawConfig;

    fn deref(&self) -> &RawConfig {
        &self.raw
    }
}

/// Attaches `ξ = c/(4π f_c)` and `κ = 2π f_c/c` after validating `raw`.
pub fn derive_constants(raw: RawConfig) -> Result<SystemConfig> {
    SystemConfig::new(raw)
}

impl SystemConfig {
    pub fn new(raw: RawConfig) -> Result<Self> {
        validate_raw(&raw)?;
        let xi = raw.speed_of_light / (4.0 * PI * raw.carrier_frequency);
        let kappa = 2.0 * PI * raw.carrier_frequency / raw.speed_of_light;
        Ok(SystemConfig { raw, xi, kappa })
    }

    pub fn reference() -> Self {
        SystemConfig::new(RawConfig::reference()).expect("reference config is valid")
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    pub fn into_raw(self) -> RawConfig {
        self.raw
    }

    /// Free-space amplitude scale `c/(4π f_c)` in metres.
    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Wavenumber `2π f_c/c` in rad/m.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn wavelength(&self) -> f64 {
        self.raw.speed_of_light / self.raw.carrier_frequency
    }

    /// Streams per IDR, `min(M, J)`.
    pub fn num_streams(&self) -> usize {
        self.raw.num_waveguides.min(self.raw.num_rx_antennas)
    }

    pub fn waveguide_length(&self, m: usize) -> f64 {
        self.raw.waveguide_lengths[m]
    }

    /// Largest admissible x for a receiver anchor so the whole ULA stays in the region.
    pub fn max_anchor_x(&self) -> f64 {
        self.raw.region_length - (self.raw.num_rx_antennas as f64 - 1.0) * self.raw.rx_antenna_spacing
    }
}

fn validate_raw(raw: &RawConfig) -> Result<()> {
    let bad = |msg: String| Err(PassError::InvalidConfig(msg));
    let positive = [
        ("carrier_frequency", raw.carrier_frequency),
        ("speed_of_light", raw.speed_of_light),
        ("rx_antenna_spacing", raw.rx_antenna_spacing),
        ("waveguide_height", raw.waveguide_height),
        ("waveguide_spacing", raw.waveguide_spacing),
        ("region_length", raw.region_length),
        ("region_width", raw.region_width),
        ("min_pa_spacing", raw.min_pa_spacing),
        ("refractive_index", raw.refractive_index),
        ("noise_power", raw.noise_power),
        ("max_power", raw.max_power),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return bad(format!("{name} must be finite and > 0, got {v}"));
        }
    }
    if !(raw.min_energy.is_finite() && raw.min_energy >= 0.0) {
        return bad(format!("min_energy must be finite and >= 0, got {}", raw.min_energy));
    }
    for (name, v) in [
        ("num_waveguides", raw.num_waveguides),
        ("num_pas_per_waveguide", raw.num_pas_per_waveguide),
        ("num_idrs", raw.num_idrs),
        ("num_rx_antennas", raw.num_rx_antennas),
    ] {
        if v == 0 {
            return bad(format!("{name} must be at least 1"));
        }
    }
    if raw.grid_points < 2 {
        return bad(format!("grid_points must be at least 2, got {}", raw.grid_points));
    }
    if raw.waveguide_lengths.len() != raw.num_waveguides {
        return bad(format!(
            "expected {} waveguide lengths, got {}",
            raw.num_waveguides,
            raw.waveguide_lengths.len()
        ));
    }
    if raw.harvest_efficiency.len() != raw.num_ehrs {
        return bad(format!(
            "expected {} harvest efficiencies, got {}",
            raw.num_ehrs,
            raw.harvest_efficiency.len()
        ));
    }
    for (q, &eta) in raw.harvest_efficiency.iter().enumerate() {
        if !(eta > 0.0 && eta < 1.0) {
            return bad(format!("harvest_efficiency[{q}] must lie in (0, 1), got {eta}"));
        }
    }
    let span = (raw.num_pas_per_waveguide as f64 - 1.0) * raw.min_pa_spacing;
    for (m, &len) in raw.waveguide_lengths.iter().enumerate() {
        if !(len.is_finite() && len > 0.0) {
            return bad(format!("waveguide_lengths[{m}] must be > 0, got {len}"));
        }
        if span > len {
            return bad(format!(
                "waveguide {m}: {} PAs at spacing {} need {span} m but length is {len} m",
                raw.num_pas_per_waveguide, raw.min_pa_spacing
            ));
        }
    }
    let ula = (raw.num_rx_antennas as f64 - 1.0) * raw.rx_antenna_spacing;
    if ula > raw.region_length {
        return bad(format!("receiver array extent {ula} m exceeds region length"));
    }
    Ok(())
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Parses `"<number> dBm"`, `"<number> mW"` or `"<number> W"`.
pub fn parse_power(text: &str) -> Result<f64> {
    let t = text.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .ok_or_else(|| PassError::Parse(format!("power {text:?} needs a unit suffix (dBm, mW or W)")))?;
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| PassError::Parse(format!("bad number in power {text:?}")))?;
    match unit.trim() {
        "dBm" | "dbm" => Ok(dbm_to_watts(value)),
        "mW" => Ok(value * 1e-3),
        "W" => Ok(value),
        other => Err(PassError::Parse(format!("unknown power unit {other:?} in {text:?}"))),
    }
}

/// A length given either in metres or as a multiple of the carrier wavelength.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LengthSpec {
    Metres(f64),
    Text(String),
}

impl LengthSpec {
    fn resolve(&self, wavelength: f64) -> Result<f64> {
        match self {
            LengthSpec::Metres(v) => Ok(*v),
            LengthSpec::Text(s) => {
                let t = s.trim();
                if let Some(num) = t.strip_suffix("lambda") {
                    let k: f64 = num
                        .trim()
                        .parse()
                        .map_err(|_| PassError::Parse(format!("bad wavelength multiple {s:?}")))?;
                    Ok(k * wavelength)
                } else if let Some(num) = t.strip_suffix('m') {
                    num.trim()
                        .parse()
                        .map_err(|_| PassError::Parse(format!("bad length {s:?}")))
                } else {
                    Err(PassError::Parse(format!(
                        "length {s:?} must be a number of metres, \"<x> m\" or \"<x> lambda\""
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerItem {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerItem {
    fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            PerItem::Scalar(v) => vec![*v; n],
            PerItem::List(v) => v.clone(),
        }
    }
}

/// On-disk TOML configuration. Keys mirror [`RawConfig`] field names; every
/// key is optional and falls back to [`RawConfig::reference`].
///
/// ```toml
/// carrier_frequency = 28e9
/// num_pas_per_waveguide = 3
/// rx_antenna_spacing = "0.5 lambda"
/// noise_power = "-50 dBm"
/// max_power = "43 dBm"
/// min_energy = "0.5e-7 W"
/// ```
///
/// `waveguide_spacing` defaults to `region_width/(M−1)` and
/// `waveguide_lengths` to `region_length` when omitted.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub carrier_frequency: Option<f64>,
    pub num_waveguides: Option<usize>,
    pub num_pas_per_waveguide: Option<usize>,
    pub num_idrs: Option<usize>,
    pub num_ehrs: Option<usize>,
    pub num_rx_antennas: Option<usize>,
    pub rx_antenna_spacing: Option<LengthSpec>,
    pub waveguide_height: Option<LengthSpec>,
    pub waveguide_spacing: Option<LengthSpec>,
    pub region_length: Option<f64>,
    pub region_width: Option<f64>,
    pub min_pa_spacing: Option<LengthSpec>,
    pub waveguide_lengths: Option<PerItem>,
    pub refractive_index: Option<f64>,
    pub noise_power: Option<String>,
    pub max_power: Option<String>,
    pub min_energy: Option<String>,
    pub harvest_efficiency: Option<PerItem>,
    pub grid_points: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PassError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn into_config(self) -> Result<SystemConfig> {
        let base = RawConfig::reference();
        let fc = self.carrier_frequency.unwrap_or(base.carrier_frequency);
        let lambda = base.speed_of_light / fc;
        let half = lambda / 2.0;
        let m = self.num_waveguides.unwrap_or(base.num_waveguides);
        let q = self.num_ehrs.unwrap_or(base.num_ehrs);
        let region_length = self.region_length.unwrap_or(base.region_length);
        let region_width = self.region_width.unwrap_or(base.region_width);
        let len = |spec: &Option<LengthSpec>, default: f64| -> Result<f64> {
            spec.as_ref().map_or(Ok(default), |s| s.resolve(lambda))
        };
        let power = |spec: &Option<String>, default: f64| -> Result<f64> {
            spec.as_deref().map_or(Ok(default), parse_power)
        };
        let raw = RawConfig {
            carrier_frequency: fc,
            speed_of_light: base.speed_of_light,
            num_waveguides: m,
            num_pas_per_waveguide: self.num_pas_per_waveguide.unwrap_or(base.num_pas_per_waveguide),
            num_idrs: self.num_idrs.unwrap_or(base.num_idrs),
            num_ehrs: q,
            num_rx_antennas: self.num_rx_antennas.unwrap_or(base.num_rx_antennas),
            rx_antenna_spacing: len(&self.rx_antenna_spacing, half)?,
            waveguide_height: len(&self.waveguide_height, base.waveguide_height)?,
            waveguide_spacing: len(
                &self.waveguide_spacing,
                default_waveguide_spacing(region_width, m),
            )?,
            region_length,
            region_width,
            min_pa_spacing: len(&self.min_pa_spacing, half)?,
            waveguide_lengths: self
                .waveguide_lengths
                .as_ref()
                .map_or_else(|| vec![region_length; m], |p| p.expand(m)),
            refractive_index: self.refractive_index.unwrap_or(base.refractive_index),
            noise_power: power(&self.noise_power, base.noise_power)?,
            max_power: power(&self.max_power, base.max_power)?,
            min_energy: power(&self.min_energy, base.min_energy)?,
            harvest_efficiency: self
                .harvest_efficiency
                .as_ref()
                .map_or_else(|| vec![0.5; q], |p| p.expand(q)),
            grid_points: self.grid_points.unwrap_or(base.grid_points),
        };
        SystemConfig::new(raw)
    }
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    ConfigFile::load(path)?.into_config()
}
