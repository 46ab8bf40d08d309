use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{dbm_to_watts, RawConfig, SystemConfig};
use crate::error::{PassError, Result};

use super::{run_scheme, sample_scenario, Scheme, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    /// Values in dBm.
    MaxPowerDbm,
    PasPerWaveguide,
    /// `d` is recomputed as `L_y/(M − 1)` for each value.
    Waveguides,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::MaxPowerDbm => "max_power_dbm",
            SweepParameter::PasPerWaveguide => "num_pas_per_waveguide",
            SweepParameter::Waveguides => "num_waveguides",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max_power_dbm" | "max_power" | "pmax" => Ok(SweepParameter::MaxPowerDbm),
            "num_pas_per_waveguide" | "pas" | "n" => Ok(SweepParameter::PasPerWaveguide),
            "num_waveguides" | "waveguides" | "m" => Ok(SweepParameter::Waveguides),
            _ => Err(PassError::Parse(format!("unknown sweep parameter '{s}'"))),
        }
    }

    pub fn apply(self, template: &RawConfig, value: f64) -> Result<SystemConfig> {
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(PassError::InvalidConfig(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        let raw = match self {
            SweepParameter::MaxPowerDbm => RawConfig { max_power: dbm_to_watts(value), ..template.clone() },
            SweepParameter::PasPerWaveguide => RawConfig { num_pas_per_waveguide: count()?, ..template.clone() },
            SweepParameter::Waveguides => template.clone().with_waveguides(count()?),
        };
        SystemConfig::new(raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Error code when the run failed; metrics are NaN in that case.
    pub error: Option<&'static str>,
    pub sum_rate: f64,
    pub power: f64,
    pub min_energy_margin: f64,
    pub energy_feasible: bool,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

fn run_cell(cfg: &Result<SystemConfig>, value: f64, seed: u64, scheme: Scheme, settings: &SolverSettings) -> SweepRow {
    let start = Instant::now();
    let out = cfg
        .as_ref()
        .map_err(|e| e.code())
        .and_then(|cfg| sample_scenario(seed, cfg).map_err(|e| e.code()))
        .and_then(|sc| run_scheme(scheme, &sc, settings).map_err(|e| e.code()));
    let wall_time_s = start.elapsed().as_secs_f64();
    match out {
        Ok(sol) => SweepRow {
            value,
            seed,
            scheme,
            error: None,
            sum_rate: sol.sum_rate,
            power: sol.power,
            min_energy_margin: sol.min_energy_margin,
            energy_feasible: sol.energy_feasible,
            converged: sol.converged,
            outer_iterations: sol.outer_iterations,
            inner_iterations: sol.inner_iterations,
            wall_time_s,
        },
        Err(code) => SweepRow {
            value,
            seed,
            scheme,
            error: Some(code),
            sum_rate: f64::NAN,
            power: f64::NAN,
            min_energy_margin: f64::NAN,
            energy_feasible: false,
            converged: false,
            outer_iterations: 0,
            inner_iterations: 0,
            wall_time_s,
        },
    }
}

/// Runs every `(value, seed, scheme)` cell in parallel. Failed cells become
/// rows with an error code; rows come back sorted by value, seed, scheme.
pub fn sweep(
    parameter: SweepParameter,
    values: &[f64],
    seeds: &[u64],
    schemes: &[Scheme],
    template: &RawConfig,
    settings: &SolverSettings,
) -> Result<SweepTable> {
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(PassError::InvalidConfig("sweep values must be strictly ascending".into()));
    }
    let configs: Vec<Result<SystemConfig>> = values.iter().map(|&v| parameter.apply(template, v)).collect();
    let mut cells = Vec::new();
    for (vi, &v) in values.iter().enumerate() {
        for &s in seeds {
            for &sch in schemes {
                cells.push((vi, v, s, sch));
            }
        }
    }
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(vi, v, s, sch)| run_cell(&configs[vi], v, s, sch, settings))
        .collect();
    rows.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.seed.cmp(&b.seed))
            .then(a.scheme.cmp(&b.scheme))
    });
    Ok(SweepTable { parameter, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub value: f64,
    pub scheme: Scheme,
    pub runs: usize,
    pub ok: usize,
    pub energy_feasible: usize,
    /// Mean over rows without an error.
    pub mean_sum_rate: f64,
    /// Mean over the seeds that succeeded at every value for this scheme.
    pub mean_sum_rate_common: f64,
    pub common_seeds: usize,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn summarize(table: &SweepTable) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(u64, Scheme), Vec<&SweepRow>> = BTreeMap::new();
    let mut values: BTreeMap<u64, f64> = BTreeMap::new();
    for r in &table.rows {
        // value ordering key that preserves the total order of f64
        let key = r.value.to_bits() ^ if r.value.is_sign_negative() { u64::MAX } else { 1 << 63 };
        values.insert(key, r.value);
        groups.entry((key, r.scheme)).or_default().push(r);
    }
    let mut common: BTreeMap<Scheme, BTreeSet<u64>> = BTreeMap::new();
    for scheme in Scheme::ALL {
        let mut set: Option<BTreeSet<u64>> = None;
        for &key in values.keys() {
            let ok: BTreeSet<u64> = groups
                .get(&(key, scheme))
                .map(|rows| rows.iter().filter(|r| r.error.is_none()).map(|r| r.seed).collect())
                .unwrap_or_default();
            set = Some(match set {
                None => ok,
                Some(s) => s.intersection(&ok).copied().collect(),
            });
        }
        common.insert(scheme, set.unwrap_or_default());
    }
    groups
        .into_iter()
        .map(|((key, scheme), rows)| {
            let ok: Vec<f64> = rows.iter().filter(|r| r.error.is_none()).map(|r| r.sum_rate).collect();
            let shared = &common[&scheme];
            let on_common: Vec<f64> = rows
                .iter()
                .filter(|r| r.error.is_none() && shared.contains(&r.seed))
                .map(|r| r.sum_rate)
                .collect();
            SummaryRow {
                value: values[&key],
                scheme,
                runs: rows.len(),
                ok: ok.len(),
                energy_feasible: rows.iter().filter(|r| r.energy_feasible).count(),
                mean_sum_rate: mean(&ok),
                mean_sum_rate_common: mean(&on_common),
                common_seeds: on_common.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameters_apply() {
        let raw = RawConfig::reference();
        let c = SweepParameter::MaxPowerDbm.apply(&raw, 33.0).unwrap();
        assert!((c.max_power - 10f64.powf(0.3)).abs() < 1e-12);
        let c = SweepParameter::Waveguides.apply(&raw, 3.0).unwrap();
        assert_eq!(c.num_waveguides, 3);
        assert!((c.waveguide_spacing - 3.0).abs() < 1e-12);
        assert!(SweepParameter::PasPerWaveguide.apply(&raw, 2.5).is_err());
        assert_eq!(SweepParameter::parse("pmax").unwrap(), SweepParameter::MaxPowerDbm);
    }

    #[test]
    fn errors_become_rows() {
        let mut raw = RawConfig::reference();
        raw.grid_points = 101;
        let settings = SolverSettings { max_outer_iters: 1, ..Default::default() };
        // second value needs 15 PAs spaced over 30 m: fine; value 0 is rejected
        let t = sweep(SweepParameter::PasPerWaveguide, &[0.0, 1.0], &[1], &[Scheme::FixedPa], &raw, &settings).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].error, Some("invalid_config"));
        assert!(t.rows[0].sum_rate.is_nan());
        let s = summarize(&t);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].ok, 0);
    }

    #[test]
    fn single_cell_has_one_row_per_scheme() {
        let mut raw = RawConfig::reference();
        raw.grid_points = 101;
        let settings = SolverSettings { max_outer_iters: 2, ..Default::default() };
        let t = sweep(SweepParameter::MaxPowerDbm, &[43.0], &[5], &Scheme::ALL, &raw, &settings).unwrap();
        assert_eq!(t.rows.len(), 4);
        let schemes: Vec<Scheme> = t.rows.iter().map(|r| r.scheme).collect();
        assert_eq!(schemes, Scheme::ALL.to_vec());
    }

    #[test]
    fn descending_values_rejected() {
        let raw = RawConfig::reference();
        assert!(sweep(SweepParameter::MaxPowerDbm, &[43.0, 33.0], &[1], &Scheme::ALL, &raw, &SolverSettings::default()).is_err());
    }
}
