//! Scenario generation, the alternating-optimisation driver and sweeps.

mod output;
mod sweep;

pub use output::{format_float, read_layout_csv, write_layout_csv, write_summary_csv, write_sweep_csv, write_timings_csv, write_trace_csv};
pub use sweep::{summarize, sweep, SummaryRow, SweepParameter, SweepRow, SweepTable};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{self, BaselineKind};
use crate::config::SystemConfig;
use crate::error::{PassError, Result};
use crate::inner::{self, InnerOutcome, InnerSolveSettings};
use crate::metrics::{self, BeamformerSet};
use crate::model::{self, ChannelMatrixSet, PinchingLayout, ReceiverLayout};
use crate::position::{self, PositionObjective, SweepInputs, SweepReport};

/// Receivers plus the starting layout for one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub config: SystemConfig,
    pub receivers: ReceiverLayout,
    pub initial_layout: PinchingLayout,
}

impl Scenario {
    pub fn new(seed: u64, config: SystemConfig, receivers: ReceiverLayout, initial_layout: PinchingLayout) -> Result<Self> {
        receivers.validate(&config)?;
        if receivers.idrs.len() != config.num_idrs || receivers.ehrs.len() != config.num_ehrs {
            return Err(PassError::InvalidConfig(format!(
                "scenario has {} IDRs and {} EHRs, config expects {} and {}",
                receivers.idrs.len(),
                receivers.ehrs.len(),
                config.num_idrs,
                config.num_ehrs
            )));
        }
        let violations = model::validate_layout(&initial_layout, &config);
        if !violations.is_empty() {
            return Err(PassError::LayoutViolation(violations));
        }
        Ok(Scenario { seed, config, receivers, initial_layout })
    }

    pub fn channels(&self) -> Result<ChannelMatrixSet> {
        model::build_channels(&self.initial_layout, &self.receivers, &self.config)
    }
}

/// Draws `K + Q` ULA anchors uniformly over the admissible rectangle with
/// ChaCha8 seeded from `seed`; IDRs first, `x` before `y`, exactly
/// `2(K + Q)` draws. The initial layout is the uniform fixed layout.
pub fn sample_scenario(seed: u64, config: &SystemConfig) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xmax = config.max_anchor_x();
    let ymax = config.region_width;
    let mut anchor = || (xmax * rng.random::<f64>(), ymax * rng.random::<f64>());
    let idrs = (0..config.num_idrs).map(|_| anchor()).collect();
    let ehrs = (0..config.num_ehrs).map(|_| anchor()).collect();
    let layout = baselines::fixed_uniform_layout(config)?;
    Scenario::new(seed, config.clone(), ReceiverLayout { idrs, ehrs }, layout)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub inner: InnerSolveSettings,
    pub outer_rel_tol: f64,
    pub max_outer_iters: usize,
    pub position_objective: PositionObjective,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            inner: InnerSolveSettings::default(),
            outer_rel_tol: 1e-4,
            max_outer_iters: 50,
            position_objective: PositionObjective::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Proposed,
    ZfPass,
    FixedPa,
    ConventionalMimo,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::ZfPass, Scheme::FixedPa, Scheme::ConventionalMimo];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::ZfPass => "zf_pass",
            Scheme::FixedPa => "fixed_pa",
            Scheme::ConventionalMimo => "conventional_mimo",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| PassError::Parse(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Inner,
    Sweep,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Inner => "inner",
            Phase::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub phase: Phase,
    pub surrogate: f64,
    pub sum_rate: f64,
    pub power: f64,
    pub min_energy_margin: f64,
    pub layout_hash: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
}

impl SolveTrace {
    /// Sum-rate at the end of each outer iteration, starting with iteration 0.
    pub fn outer_rates(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if r.outer == out.len() {
                out.push(r.sum_rate);
            } else if r.outer + 1 == out.len() {
                *out.last_mut().unwrap() = r.sum_rate;
            }
        }
        out
    }

    fn push_inner(&mut self, outer: usize, inner: &InnerOutcome, hash: u64) {
        for r in &inner.rows {
            self.rows.push(TraceRow {
                outer,
                inner: r.iteration,
                phase: if r.iteration == 0 { Phase::Init } else { Phase::Inner },
                surrogate: r.surrogate,
                sum_rate: r.sum_rate,
                power: r.power,
                min_energy_margin: r.min_energy_margin,
                layout_hash: hash,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct P1Solution {
    pub beams: BeamformerSet,
    /// `None` for the conventional array, which has no PAs.
    pub layout: Option<PinchingLayout>,
    pub channels: ChannelMatrixSet,
    pub sum_rate: f64,
    pub power: f64,
    pub energies: Vec<f64>,
    pub min_energy_margin: f64,
    pub energy_feasible: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    pub trace: SolveTrace,
    pub sweeps: Vec<SweepReport>,
}

impl P1Solution {
    pub(crate) fn assemble(
        cfg: &SystemConfig,
        beams: BeamformerSet,
        layout: Option<PinchingLayout>,
        channels: ChannelMatrixSet,
        counts: (usize, usize, bool),
        trace: SolveTrace,
        sweeps: Vec<SweepReport>,
    ) -> Self {
        let energies = metrics::harvested_energies(&channels, &beams, cfg);
        let min_energy_margin = metrics::min_energy_margin(&channels, &beams, cfg);
        P1Solution {
            sum_rate: metrics::sum_rate(&channels, &beams, cfg.noise_power),
            power: beams.total_power(),
            energy_feasible: energies.iter().all(|&e| e >= cfg.min_energy * (1.0 - inner::ENERGY_REL_SLACK)),
            energies,
            min_energy_margin,
            beams,
            layout,
            channels,
            outer_iterations: counts.0,
            inner_iterations: counts.1,
            converged: counts.2,
            trace,
            sweeps,
        }
    }
}

/// Joint beamforming and PA placement from the scenario's initial layout.
pub fn solve_p1(scenario: &Scenario, settings: &SolverSettings) -> Result<P1Solution> {
    let channels = scenario.channels()?;
    let beams = inner::initial_beams(&channels, &scenario.config)?;
    solve_p1_from(scenario, &scenario.initial_layout, &beams, settings)
}

/// [`solve_p1`] from an explicit starting point.
pub fn solve_p1_from(
    scenario: &Scenario,
    layout: &PinchingLayout,
    beams: &BeamformerSet,
    settings: &SolverSettings,
) -> Result<P1Solution> {
    let cfg = &scenario.config;
    let mut layout = layout.clone();
    let mut channels = model::build_channels(&layout, &scenario.receivers, cfg)?;
    let mut trace = SolveTrace::default();
    let mut sweeps = Vec::new();
    let mut hash = layout.snapshot_hash();

    let mut inner = inner::wmmse_inner_loop(&channels, beams, cfg, &settings.inner)?;
    trace.push_inner(0, &inner, hash);
    let mut inner_total = inner.iterations;
    let mut rate = inner.sum_rate;
    let mut converged = settings.max_outer_iters == 0;
    let mut outer = 0;

    while outer < settings.max_outer_iters {
        outer += 1;
        let inputs = SweepInputs {
            beams: &inner.beams,
            filters: &inner.state.filters,
            weights: &inner.state.weights,
            objective: settings.position_objective,
        };
        let (next_layout, next_channels, report) =
            position::gauss_seidel_sweep(&layout, &scenario.receivers, &inputs, cfg)?;
        layout = next_layout;
        channels = next_channels;
        hash = layout.snapshot_hash();
        trace.rows.push(TraceRow {
            outer,
            inner: 0,
            phase: Phase::Sweep,
            surrogate: report.objective_after(),
            sum_rate: metrics::sum_rate(&channels, &inner.beams, cfg.noise_power),
            power: inner.beams.total_power(),
            min_energy_margin: metrics::min_energy_margin(&channels, &inner.beams, cfg),
            layout_hash: hash,
        });
        sweeps.push(report);

        inner = inner::wmmse_inner_loop(&channels, &inner.beams, cfg, &settings.inner)?;
        // skip the duplicate t = 0 row: it equals the sweep row
        trace.push_inner(outer, &InnerOutcome { rows: inner.rows[1..].to_vec(), ..inner.clone() }, hash);
        inner_total += inner.iterations;
        let rel = (inner.sum_rate - rate).abs() / rate.abs().max(1.0);
        rate = inner.sum_rate;
        if rel < settings.outer_rel_tol {
            converged = true;
            break;
        }
    }

    let sol = P1Solution::assemble(
        cfg,
        inner.beams,
        Some(layout),
        channels,
        (outer, inner_total, converged),
        trace,
        sweeps,
    );
    if !converged {
        return Err(PassError::NotConverged(settings.max_outer_iters, Box::new(sol)));
    }
    Ok(sol)
}

/// Runs one scheme; non-convergence of the outer loop is returned as the
/// best iterate with `converged = false`.
pub fn run_scheme(scheme: Scheme, scenario: &Scenario, settings: &SolverSettings) -> Result<P1Solution> {
    let out = match scheme {
        Scheme::Proposed => solve_p1(scenario, settings),
        Scheme::ZfPass => baselines::run_baseline(BaselineKind::ZfPass, scenario, settings),
        Scheme::FixedPa => baselines::run_baseline(BaselineKind::FixedPa, scenario, settings),
        Scheme::ConventionalMimo => baselines::run_baseline(BaselineKind::ConventionalMimo, scenario, settings),
    };
    match out {
        Err(PassError::NotConverged(_, best)) => Ok(*best),
        other => other,
    }
}
