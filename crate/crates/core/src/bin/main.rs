use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pass_swipt::config::{watts_to_dbm, SystemConfig};
use pass_swipt::harness::{
    self, read_layout_csv, run_scheme, sample_scenario, summarize, write_layout_csv, write_summary_csv,
    write_sweep_csv, write_timings_csv, write_trace_csv, Scheme, SolverSettings, SweepParameter,
};
use pass_swipt::model::{build_channels, validate_layout};
use pass_swipt::{load_config, PositionObjective};

#[derive(Parser)]
#[command(name = "pass-swipt", version, about = "Pinching-antenna SWIPT beamforming and placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one seeded scenario and write its trace and layout.
    Solve(SolveArgs),
    /// Sweep max power, PAs per waveguide or waveguide count over seeds.
    Sweep(SweepArgs),
    /// Check a config file and optionally a layout CSV.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults to the reference setup when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    #[arg(long, default_value_t = 100)]
    max_inner: usize,
    #[arg(long, default_value_t = 1e-4)]
    outer_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    inner_tol: f64,
    #[arg(long, value_enum, default_value_t = Objective::Refreshed)]
    objective: Objective,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Refreshed,
    Fixed,
}

impl Common {
    fn config(&self) -> anyhow::Result<SystemConfig> {
        match &self.config {
            Some(p) => load_config(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(SystemConfig::reference()),
        }
    }

    fn settings(&self) -> SolverSettings {
        let mut s = SolverSettings {
            max_outer_iters: self.max_outer,
            outer_rel_tol: self.outer_tol,
            position_objective: match self.objective {
                Objective::Refreshed => PositionObjective::RefreshedFilters,
                Objective::Fixed => PositionObjective::FixedFilters,
            },
            ..Default::default()
        };
        s.inner.max_inner_iters = self.max_inner;
        s.inner.surrogate_rel_tol = self.inner_tol;
        s
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated: proposed, zf_pass, fixed_pa, conventional_mimo, or all.
    #[arg(long, default_value = "proposed")]
    schemes: String,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// max_power_dbm, num_pas_per_waveguide or num_waveguides.
    #[arg(long)]
    param: String,
    /// Comma-separated ascending values (dBm for max power).
    #[arg(long)]
    values: String,
    /// Comma list and/or inclusive ranges, e.g. `0-19` or `1,4,7-9`.
    #[arg(long, default_value = "0-19")]
    seeds: String,
    #[arg(long, default_value = "all")]
    schemes: String,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Layout CSV with columns waveguide,pa,position_m.
    #[arg(long)]
    layout: Option<PathBuf>,
}

fn parse_schemes(s: &str) -> anyhow::Result<Vec<Scheme>> {
    if s.trim() == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    let mut out: Vec<Scheme> = s.split(',').map(|x| Scheme::parse(x.trim())).collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range {part}");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse()?),
        }
    }
    if out.is_empty() {
        bail!("no seeds given");
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn solve(args: SolveArgs) -> anyhow::Result<()> {
    let cfg = args.common.config()?;
    let settings = args.common.settings();
    let scenario = sample_scenario(args.seed, &cfg)?;
    fs::create_dir_all(&args.out)?;
    println!("scheme,seed,sum_rate,power_dbm,min_energy_margin,energy_feasible,outer_iterations,converged");
    for scheme in parse_schemes(&args.schemes)? {
        let sol = match run_scheme(scheme, &scenario, &settings) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("{}: {} ({})", scheme.name(), e, e.code());
                println!("{},{},nan,nan,nan,false,0,false", scheme.name(), args.seed);
                continue;
            }
        };
        let tag = format!("{}_seed{}", scheme.name(), args.seed);
        write_trace_csv(create(&args.out, &format!("trace_{tag}.csv"))?, scheme.name(), &sol.trace)?;
        if let Some(layout) = &sol.layout {
            write_layout_csv(create(&args.out, &format!("layout_{tag}.csv"))?, layout)?;
        }
        println!(
            "{},{},{},{},{},{},{},{}",
            scheme.name(),
            args.seed,
            harness::format_float(sol.sum_rate),
            harness::format_float(watts_to_dbm(sol.power)),
            harness::format_float(sol.min_energy_margin),
            sol.energy_feasible,
            sol.outer_iterations,
            sol.converged
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let cfg = args.common.config()?;
    let settings = args.common.settings();
    let param = SweepParameter::parse(&args.param)?;
    let values: Vec<f64> = args
        .values
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value '{v}'")))
        .collect::<anyhow::Result<_>>()?;
    let seeds = parse_seeds(&args.seeds)?;
    let schemes = parse_schemes(&args.schemes)?;
    let table = harness::sweep(param, &values, &seeds, &schemes, cfg.raw(), &settings)?;
    fs::create_dir_all(&args.out)?;
    let name = param.name();
    write_sweep_csv(create(&args.out, &format!("sweep_{name}.csv"))?, &table)?;
    write_timings_csv(create(&args.out, &format!("timings_{name}.csv"))?, &table)?;
    let summary = summarize(&table);
    write_summary_csv(create(&args.out, &format!("summary_{name}.csv"))?, name, &summary)?;
    for r in &summary {
        println!(
            "{name}={} {:<18} ok {}/{} mean sum-rate {}",
            harness::format_float(r.value),
            r.scheme.name(),
            r.ok,
            r.runs,
            harness::format_float(r.mean_sum_rate)
        );
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> anyhow::Result<()> {
    let cfg = match &args.config {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
        None => SystemConfig::reference(),
    };
    println!(
        "config ok: M={} N={} K={} Q={} J={} N_d={} xi={} kappa={} P_max={} dBm",
        cfg.num_waveguides,
        cfg.num_pas_per_waveguide,
        cfg.num_idrs,
        cfg.num_ehrs,
        cfg.num_rx_antennas,
        cfg.num_streams(),
        harness::format_float(cfg.xi()),
        harness::format_float(cfg.kappa()),
        harness::format_float(watts_to_dbm(cfg.max_power))
    );
    if let Some(path) = &args.layout {
        let layout = read_layout_csv(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
        if layout.num_waveguides() != cfg.num_waveguides || layout.num_pas() != cfg.num_pas_per_waveguide {
            bail!(
                "layout is {}x{}, config expects {}x{}",
                layout.num_waveguides(),
                layout.num_pas(),
                cfg.num_waveguides,
                cfg.num_pas_per_waveguide
            );
        }
        let violations = validate_layout(&layout, &cfg);
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("{v}");
            }
            bail!("{} placement violation(s)", violations.len());
        }
        let scenario = sample_scenario(0, &cfg)?;
        build_channels(&layout, &scenario.receivers, &cfg)?;
        println!("layout ok: {} PAs", layout.num_waveguides() * layout.num_pas());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    }
}
