//! Command-line surface: `fig1`, `fig2`, `evolve` and `regime` subcommands
//! emitting CSV (default) or JSON to stdout or a file.
//!
//! Exit codes: 0 success, 2 usage/validation failure, 3 numeric failure
//! (norm underflow or step-limit exceeded). All output is
//! locale-independent: '.' decimal points, '\n' line endings, 17 significant
//! digits for floats in CSV. There is no randomness anywhere, so runs are
//! deterministic by construction; sweep parallelism (`--jobs`) never affects
//! output ordering or content.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::experiments::{
    self, PulseScanConfig, PulseSpec, RegimeReport, SurfaceConfig, TwoLevelSetup,
};
use crate::propagator::{self, IntegratorConfig};
use crate::schedules::{self, Method, RunOptions, TauConvention};
use crate::types::{DeltaE, DriveSpec, MeasurementSchedule, MeterSegment, StateVector, SystemSpec};

const EXIT_USAGE: i32 = 2;
const EXIT_NUMERIC: i32 = 3;

/// Parse the process arguments and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version, 2 for usage errors
            e.exit();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match &e {
                CliError::Lib(inner) if inner.is_numeric() => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            }
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
    Io(io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "zenosim",
    version,
    about = "Simulate quantum systems under continuous or pulsed energy measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Survival-probability surface over time and measurement error
    Fig1(Fig1Args),
    /// Pi-pulse transition probability versus measurement error, by pulse count
    Fig2(Fig2Args),
    /// Propagate a single trajectory described by a JSON config file
    Evolve(EvolveArgs),
    /// Report damping regime and derived rates for one configuration
    Regime(RegimeArgs),
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this path instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// No-op marker: runs are deterministic, no RNG is involved anywhere
    #[arg(long)]
    seedless: bool,
}

#[derive(Args, Debug, Clone)]
struct SetupArgs {
    /// Energy of level 1
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    e1: f64,
    /// Energy of level 2
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    e2: f64,
    /// Drive amplitude V0
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    v0: f64,
    /// Planck constant convention
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    hbar: f64,
}

impl SetupArgs {
    fn setup(&self) -> CliResult<TwoLevelSetup> {
        if !(self.hbar > 0.0) {
            return Err(CliError::Usage(format!(
                "--hbar must be positive (got {})",
                self.hbar
            )));
        }
        if !(self.v0 >= 0.0) {
            return Err(CliError::Usage(format!(
                "--v0 must be non-negative (got {})",
                self.v0
            )));
        }
        Ok(TwoLevelSetup {
            e1: self.e1,
            e2: self.e2,
            v0: self.v0,
            hbar: self.hbar,
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    ClosedForm,
    Rk4,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::ClosedForm => Method::ClosedForm,
            MethodArg::Rk4 => Method::Rk4,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TauConventionArg {
    Total,
    PerSegment,
}

impl From<TauConventionArg> for TauConvention {
    fn from(t: TauConventionArg) -> TauConvention {
        match t {
            TauConventionArg::Total => TauConvention::Total,
            TauConventionArg::PerSegment => TauConvention::PerSegment,
        }
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected lo,hi, got {s:?}"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

#[derive(Args, Debug)]
struct Fig1Args {
    /// Number of time samples over [0, tau]
    #[arg(long, default_value_t = 200)]
    t_points: usize,
    /// Number of measurement-error samples (log-spaced)
    #[arg(long, default_value_t = 100)]
    de_points: usize,
    /// Measurement-error span lo,hi in units of the critical error
    #[arg(long, value_parser = parse_range, default_value = "0.1,10")]
    de_range: (f64, f64),
    /// Measurement window (defaults to 2*pi*hbar/V0)
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[command(flatten)]
    setup: SetupArgs,
    /// Evolution method (rk4 as a cross-check)
    #[arg(long, value_enum, default_value_t = MethodArg::ClosedForm)]
    method: MethodArg,
    /// RK4 step (with --method rk4)
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Worker threads for the sweep (default: available parallelism)
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct Fig2Args {
    /// Comma-separated pulse counts and/or `continuous`
    #[arg(long, value_delimiter = ',', default_value = "1,4,16,64,continuous")]
    pulses: Vec<String>,
    /// Measured fraction of each pulse slot
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    duty: f64,
    /// Number of measurement-error samples (log-spaced)
    #[arg(long, default_value_t = 100)]
    de_points: usize,
    /// Measurement-error span lo,hi in units of the critical error
    #[arg(long, value_parser = parse_range, default_value = "0.1,10")]
    de_range: (f64, f64),
    #[command(flatten)]
    setup: SetupArgs,
    /// Evolution method (rk4 as a cross-check)
    #[arg(long, value_enum, default_value_t = MethodArg::ClosedForm)]
    method: MethodArg,
    /// RK4 step (with --method rk4)
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Worker threads for the sweep (default: available parallelism)
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    /// JSON run configuration (see README for the schema)
    #[arg(long)]
    config: PathBuf,
    /// Emit rows at every multiple of this interval, besides boundaries
    #[arg(long, allow_negative_numbers = true)]
    sample_interval: Option<f64>,
    /// Override the method given in the config file
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Which tau enters the damping denominator per segment
    #[arg(long, value_enum, default_value_t = TauConventionArg::Total)]
    tau_convention: TauConventionArg,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct RegimeArgs {
    #[command(flatten)]
    setup: SetupArgs,
    /// Total measurement time
    #[arg(long, default_value_t = std::f64::consts::TAU, allow_negative_numbers = true)]
    tau: f64,
    /// Measurement error (a number, or `unmeasured`)
    #[arg(long, value_parser = parse_delta_e, allow_negative_numbers = true)]
    delta_e: DeltaE,
    #[command(flatten)]
    out: OutputArgs,
}

fn parse_delta_e(s: &str) -> Result<DeltaE, String> {
    if s.eq_ignore_ascii_case("unmeasured") {
        return Ok(DeltaE::Unmeasured);
    }
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("must be positive or `unmeasured`, got {v}"));
    }
    Ok(DeltaE::Finite(v))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fig1(args) => cmd_fig1(args),
        Command::Fig2(args) => cmd_fig2(args),
        Command::Evolve(args) => cmd_evolve(args),
        Command::Regime(args) => cmd_regime(args),
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            if n == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn integrator_from(step: Option<f64>) -> CliResult<Option<IntegratorConfig>> {
    match step {
        None => Ok(None),
        Some(s) => {
            if !(s.is_finite() && s > 0.0) {
                return Err(CliError::Usage(format!(
                    "--step must be positive (got {s})"
                )));
            }
            Ok(Some(IntegratorConfig::new(s)?))
        }
    }
}

// ---------------------------------------------------------------------------
// fig1
// ---------------------------------------------------------------------------

fn cmd_fig1(args: Fig1Args) -> CliResult<()> {
    let setup = args.setup.setup()?;
    if !(setup.v0 > 0.0) {
        return Err(CliError::Usage("--v0 must be positive for fig1".into()));
    }
    let tau = args
        .tau
        .unwrap_or(std::f64::consts::TAU * setup.hbar / setup.v0);
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CliError::Usage(format!(
            "--tau must be positive (got {tau})"
        )));
    }
    if args.t_points == 0 {
        return Err(CliError::Usage("--t-points must be at least 1".into()));
    }
    if args.de_points == 0 {
        return Err(CliError::Usage("--de-points must be at least 1".into()));
    }
    let (lo, hi) = args.de_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(CliError::Usage(format!(
            "--de-range must satisfy 0 < lo <= hi (got {lo},{hi})"
        )));
    }
    let config = SurfaceConfig {
        setup,
        tau,
        t_points: args.t_points,
        de_points: args.de_points,
        de_range: args.de_range,
        method: args.method.into(),
        integrator: integrator_from(args.step)?,
    };
    let rows = in_pool(args.jobs, || experiments::fig1_surface(&config))??;

    emit(&args.out, |w, format| match format {
        Format::Csv => {
            writeln!(w, "de_over_decrit,t,p1")?;
            for r in &rows {
                writeln!(w, "{},{},{}", f(r.de_over_decrit), f(r.t), f(r.p1))?;
            }
            Ok(())
        }
        Format::Json => write_json(w, &rows),
    })
}

// ---------------------------------------------------------------------------
// fig2
// ---------------------------------------------------------------------------

fn parse_pulses(specs: &[String]) -> CliResult<Vec<PulseSpec>> {
    if specs.is_empty() {
        return Err(CliError::Usage("--pulses must not be empty".into()));
    }
    specs
        .iter()
        .map(|s| {
            let s = s.trim();
            if s.eq_ignore_ascii_case("continuous") {
                Ok(PulseSpec::Continuous)
            } else {
                let n: u32 = s.parse().map_err(|_| {
                    CliError::Usage(format!(
                        "--pulses entries must be positive integers or `continuous`, got {s:?}"
                    ))
                })?;
                if n == 0 {
                    return Err(CliError::Usage("--pulses entries must be >= 1".into()));
                }
                Ok(PulseSpec::Pulses(n))
            }
        })
        .collect()
}

fn cmd_fig2(args: Fig2Args) -> CliResult<()> {
    let setup = args.setup.setup()?;
    if !(setup.v0 > 0.0) {
        return Err(CliError::Usage("--v0 must be positive for fig2".into()));
    }
    let pulses = parse_pulses(&args.pulses)?;
    if !(args.duty > 0.0 && args.duty <= 1.0) {
        return Err(CliError::Usage(format!(
            "--duty must lie in (0, 1] (got {})",
            args.duty
        )));
    }
    for p in &pulses {
        if let PulseSpec::Pulses(n) = p {
            if *n as f64 * args.duty > 1.0 + 1e-12 {
                return Err(CliError::Usage(format!(
                    "--duty {} with --pulses {n}: pulses would overlap (n * duty > 1)",
                    args.duty
                )));
            }
        }
    }
    if args.de_points == 0 {
        return Err(CliError::Usage("--de-points must be at least 1".into()));
    }
    let (lo, hi) = args.de_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(CliError::Usage(format!(
            "--de-range must satisfy 0 < lo <= hi (got {lo},{hi})"
        )));
    }
    let config = PulseScanConfig {
        setup,
        pulses,
        duty: args.duty,
        de_points: args.de_points,
        de_range: args.de_range,
        method: args.method.into(),
        integrator: integrator_from(args.step)?,
    };
    let rows = in_pool(args.jobs, || experiments::fig2_pulse_scan(&config))??;

    emit(&args.out, |w, format| match format {
        Format::Csv => {
            writeln!(w, "pulses,de_over_decrit,p12")?;
            for r in &rows {
                writeln!(w, "{},{},{}", r.pulses, f(r.de_over_decrit), f(r.p12))?;
            }
            Ok(())
        }
        Format::Json => write_json(w, &rows),
    })
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvolveConfig {
    version: u32,
    system: SystemConfig,
    drive: DriveConfig,
    schedule: ScheduleConfig,
    #[serde(default)]
    method: Option<MethodName>,
    #[serde(default)]
    integrator: Option<IntegratorSection>,
    /// Initial amplitudes as [re, im] pairs; defaults to the ground state.
    #[serde(default)]
    initial_state: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemConfig {
    energies: Vec<f64>,
    #[serde(default = "one")]
    hbar: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriveConfig {
    kind: DriveKind,
    #[serde(default)]
    v0: f64,
    #[serde(default)]
    omega: f64,
    #[serde(default)]
    t0: f64,
}

#[derive(Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum DriveKind {
    None,
    ResonantTwoLevel,
    GeneralMatrix,
}

#[derive(Debug, Deserialize, Clone, Copy)]
enum MethodName {
    #[serde(rename = "closed_form", alias = "closed-form")]
    ClosedForm,
    #[serde(rename = "rk4")]
    Rk4,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    step: f64,
}

/// Either a preset (`continuous`, `pulsed`, `qnd`) with its parameters, or an
/// explicit segment list; exactly one of `preset`/`segments` may be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleConfig {
    #[serde(default)]
    preset: Option<PresetKind>,
    #[serde(default)]
    segments: Option<Vec<SegmentConfig>>,
    /// continuous: measurement window; explicit segments: tau override
    #[serde(default)]
    tau: Option<f64>,
    #[serde(default)]
    e: Option<f64>,
    #[serde(default)]
    delta_e: Option<DeltaEConfig>,
    /// pulsed: pulse count
    #[serde(default)]
    n: Option<u32>,
    /// pulsed: train duration
    #[serde(default)]
    total_time: Option<f64>,
    /// pulsed: measured fraction of each slot (default 0.01)
    #[serde(default)]
    duty: Option<f64>,
    /// qnd: number of monitored periods
    #[serde(default)]
    periods: Option<u32>,
    /// qnd: measurement pulse width
    #[serde(default)]
    pulse_width: Option<f64>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum PresetKind {
    Continuous,
    Pulsed,
    Qnd,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentConfig {
    t_start: f64,
    t_end: f64,
    #[serde(default)]
    e: f64,
    delta_e: DeltaEConfig,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DeltaEConfig {
    Number(f64),
    Word(String),
}

impl DeltaEConfig {
    fn resolve(&self, path: &str) -> CliResult<DeltaE> {
        match self {
            DeltaEConfig::Number(v) => Ok(DeltaE::Finite(*v)),
            DeltaEConfig::Word(s) if s == "unmeasured" => Ok(DeltaE::Unmeasured),
            DeltaEConfig::Word(s) => Err(CliError::Usage(format!(
                "{path}: expected a number or \"unmeasured\", got {s:?}"
            ))),
        }
    }
}

fn require<T>(opt: Option<T>, path: &str, preset: &str) -> CliResult<T> {
    opt.ok_or_else(|| CliError::Usage(format!("schedule.{path}: required for preset {preset:?}")))
}

fn reject_if<T>(opt: &Option<T>, path: &str, context: &str) -> CliResult<()> {
    if opt.is_some() {
        return Err(CliError::Usage(format!(
            "schedule.{path}: not applicable {context}"
        )));
    }
    Ok(())
}

fn build_schedule(
    cfg: &ScheduleConfig,
    system: &SystemSpec,
    drive: &DriveSpec,
) -> CliResult<MeasurementSchedule> {
    match (&cfg.preset, &cfg.segments) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "schedule: give either preset or segments, not both".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "schedule: needs a preset or an explicit segments list".into(),
        )),
        (Some(preset), None) => {
            let delta_e = require(cfg.delta_e.as_ref(), "delta_e", preset_name(*preset))?
                .resolve("schedule.delta_e")?;
            let e = cfg.e.unwrap_or(0.0);
            match preset {
                PresetKind::Continuous => {
                    for (v, p) in [
                        (cfg.n.is_some(), "n"),
                        (cfg.total_time.is_some(), "total_time"),
                        (cfg.duty.is_some(), "duty"),
                        (cfg.periods.is_some(), "periods"),
                        (cfg.pulse_width.is_some(), "pulse_width"),
                    ] {
                        if v {
                            return Err(CliError::Usage(format!(
                                "schedule.{p}: not applicable to preset \"continuous\""
                            )));
                        }
                    }
                    let tau = require(cfg.tau, "tau", "continuous")?;
                    Ok(schedules::continuous(tau, e, delta_e)?)
                }
                PresetKind::Pulsed => {
                    reject_if(&cfg.tau, "tau", "to preset \"pulsed\"")?;
                    reject_if(&cfg.periods, "periods", "to preset \"pulsed\"")?;
                    reject_if(&cfg.pulse_width, "pulse_width", "to preset \"pulsed\"")?;
                    let n = require(cfg.n, "n", "pulsed")?;
                    let total_time = require(cfg.total_time, "total_time", "pulsed")?;
                    let duty = cfg.duty.unwrap_or(0.01);
                    Ok(schedules::pulsed(n, total_time, duty, e, delta_e)?)
                }
                PresetKind::Qnd => {
                    reject_if(&cfg.tau, "tau", "to preset \"qnd\"")?;
                    reject_if(&cfg.n, "n", "to preset \"qnd\"")?;
                    reject_if(&cfg.total_time, "total_time", "to preset \"qnd\"")?;
                    reject_if(&cfg.duty, "duty", "to preset \"qnd\"")?;
                    let periods = require(cfg.periods, "periods", "qnd")?;
                    let pulse_width = require(cfg.pulse_width, "pulse_width", "qnd")?;
                    Ok(schedules::stroboscopic_qnd(
                        periods,
                        pulse_width,
                        e,
                        delta_e,
                        system,
                        drive,
                    )?)
                }
            }
        }
        (None, Some(segments)) => {
            for (p, v) in [
                ("e", cfg.e.is_some()),
                ("delta_e", cfg.delta_e.is_some()),
                ("n", cfg.n.is_some()),
                ("total_time", cfg.total_time.is_some()),
                ("duty", cfg.duty.is_some()),
                ("periods", cfg.periods.is_some()),
                ("pulse_width", cfg.pulse_width.is_some()),
            ] {
                if v {
                    return Err(CliError::Usage(format!(
                        "schedule.{p}: not applicable with an explicit segments list"
                    )));
                }
            }
            let mut built = Vec::with_capacity(segments.len());
            for (i, s) in segments.iter().enumerate() {
                let de = s
                    .delta_e
                    .resolve(&format!("schedule.segments[{i}].delta_e"))?;
                let seg = MeterSegment::new(s.t_start, s.t_end, s.e, de)
                    .map_err(|e| CliError::Usage(format!("schedule.segments[{i}]: {e}")))?;
                built.push(seg);
            }
            let sched = match cfg.tau {
                Some(tau) => MeasurementSchedule::with_tau(built, tau),
                None => MeasurementSchedule::new(built),
            }?;
            Ok(sched)
        }
    }
}

fn preset_name(p: PresetKind) -> &'static str {
    match p {
        PresetKind::Continuous => "continuous",
        PresetKind::Pulsed => "pulsed",
        PresetKind::Qnd => "qnd",
    }
}

fn cmd_evolve(args: EvolveArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("--config {}: {e}", args.config.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let cfg: EvolveConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", args.config.display())))?;
    if cfg.version != 1 {
        return Err(CliError::Usage(format!(
            "config version: expected 1, got {}",
            cfg.version
        )));
    }

    let system = SystemSpec::new(cfg.system.energies.clone(), cfg.system.hbar)
        .map_err(|e| CliError::Usage(format!("system: {e}")))?;
    let drive =
        match cfg.drive.kind {
            DriveKind::None => DriveSpec::none(),
            DriveKind::ResonantTwoLevel => {
                DriveSpec::resonant_two_level(cfg.drive.v0, cfg.drive.omega, cfg.drive.t0)
                    .map_err(|e| CliError::Usage(format!("drive: {e}")))?
            }
            DriveKind::GeneralMatrix => return Err(CliError::Usage(
                "drive.kind: \"general_matrix\" drives are only available through the library API"
                    .into(),
            )),
        };
    let schedule = build_schedule(&cfg.schedule, &system, &drive)?;

    let initial = match &cfg.initial_state {
        None => StateVector::ground(system.levels()),
        Some(pairs) => {
            if pairs.len() != system.levels() {
                return Err(CliError::Usage(format!(
                    "initial_state: {} amplitudes for a {}-level system",
                    pairs.len(),
                    system.levels()
                )));
            }
            let amps = pairs
                .iter()
                .map(|[re, im]| num_complex::Complex64::new(*re, *im))
                .collect();
            StateVector::new(amps, 0.0)
                .map_err(|e| CliError::Usage(format!("initial_state: {e}")))?
        }
    };

    let method = match (args.method, cfg.method) {
        (Some(m), _) => m.into(),
        (None, Some(MethodName::ClosedForm)) | (None, None) => Method::ClosedForm,
        (None, Some(MethodName::Rk4)) => Method::Rk4,
    };
    if let Some(dt) = args.sample_interval {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CliError::Usage(format!(
                "--sample-interval must be positive (got {dt})"
            )));
        }
    }
    let integrator = match &cfg.integrator {
        None => None,
        Some(s) => Some(
            IntegratorConfig::new(s.step)
                .map_err(|e| CliError::Usage(format!("integrator.step: {e}")))?,
        ),
    };
    let options = RunOptions {
        method,
        tau_convention: args.tau_convention.into(),
        integrator,
        sample_interval: args.sample_interval,
    };

    let traj = schedules::run_schedule(&initial, &system, &drive, &schedule, &options)?;

    let levels = system.levels();
    emit(&args.out, |w, format| match format {
        Format::Csv => {
            let mut header = String::from("t");
            for n in 1..=levels {
                header.push_str(&format!(",p_{n}"));
            }
            header.push_str(",norm");
            writeln!(w, "{header}")?;
            for point in &traj.points {
                let probs = propagator::probabilities(&point.state)?;
                let mut line = f(point.state.time());
                for p in probs {
                    line.push(',');
                    line.push_str(&f(p));
                }
                line.push(',');
                line.push_str(&f(point.state.norm_sq()));
                writeln!(w, "{line}")?;
            }
            Ok(())
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row {
                t: f64,
                p: Vec<f64>,
                norm: f64,
                boundary: bool,
            }
            let rows: Result<Vec<Row>, Error> = traj
                .points
                .iter()
                .map(|point| {
                    Ok(Row {
                        t: point.state.time(),
                        p: propagator::probabilities(&point.state)?,
                        norm: point.state.norm_sq(),
                        boundary: point.is_boundary,
                    })
                })
                .collect();
            write_json(w, &rows?)
        }
    })
}

// ---------------------------------------------------------------------------
// regime
// ---------------------------------------------------------------------------

fn cmd_regime(args: RegimeArgs) -> CliResult<()> {
    let setup = args.setup.setup()?;
    if !(args.tau > 0.0) {
        return Err(CliError::Usage(format!(
            "--tau must be positive (got {})",
            args.tau
        )));
    }
    if !(setup.v0 > 0.0) {
        return Err(CliError::Usage("--v0 must be positive for regime".into()));
    }
    let report = experiments::regime_report(&setup, args.tau, args.delta_e)?;

    emit(&args.out, |w, format| match format {
        Format::Csv => {
            writeln!(w, "delta_e_crit,omega,w_re,w_im,regime,rabi_period")?;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                f(report.delta_e_crit),
                f(report.damping),
                f(report.w.re),
                f(report.w.im),
                report.regime,
                f(report.rabi_period)
            )?;
            Ok(())
        }
        Format::Json => {
            let value = regime_json(&report);
            serde_json::to_writer(&mut *w, &value).map_err(json_io)?;
            writeln!(w)?;
            Ok(())
        }
    })
}

fn regime_json(r: &RegimeReport) -> serde_json::Value {
    serde_json::json!({
        "delta_e_crit": r.delta_e_crit,
        "omega": r.damping,
        "w": { "re": r.w.re, "im": r.w.im },
        "regime": r.regime.to_string(),
        "rabi_period": r.rabi_period,
    })
}

// ---------------------------------------------------------------------------
// output plumbing
// ---------------------------------------------------------------------------

/// Floats in CSV: 17 significant digits, locale-independent.
fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_io(e: serde_json::Error) -> CliError {
    CliError::Io(io::Error::other(e))
}

fn write_json<W: Write + ?Sized, T: Serialize>(w: &mut W, rows: &[T]) -> CliResult<()> {
    serde_json::to_writer(&mut *w, rows).map_err(json_io)?;
    writeln!(w)?;
    Ok(())
}

fn emit(
    out: &OutputArgs,
    body: impl FnOnce(&mut dyn Write, Format) -> CliResult<()>,
) -> CliResult<()> {
    match &out.output {
        None => {
            let stdout = io::stdout();
            let mut w = io::BufWriter::new(stdout.lock());
            body(&mut w, out.format)?;
            w.flush()?;
            Ok(())
        }
        Some(path) => {
            let file = fs::File::create(path)?;
            let mut w = io::BufWriter::new(file);
            body(&mut w, out.format)?;
            w.flush()?;
            Ok(())
        }
    }
}
