//! Parameter-sweep drivers: the survival-probability surface over time and
//! measurement error, the pulse-train transition scan, and single-point
//! regime reports. These emit in-memory tables; rendering is out of scope.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form;
use crate::error::{Error, Result};
use crate::propagator::{self, IntegratorConfig};
use crate::schedules::{self, Method, RunOptions};
use crate::types::{
    DeltaE, DriveSpec, MeterSegment, Regime, RegimeParams, StateVector, SystemSpec,
};

/// Shared two-level setup; defaults to the natural convention
/// E2 - E1 = V0 = hbar = 1 with a resonant drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelSetup {
    pub e1: f64,
    pub e2: f64,
    pub v0: f64,
    pub hbar: f64,
}

impl Default for TwoLevelSetup {
    fn default() -> Self {
        TwoLevelSetup {
            e1: 0.0,
            e2: 1.0,
            v0: 1.0,
            hbar: 1.0,
        }
    }
}

impl TwoLevelSetup {
    pub fn system(&self) -> Result<SystemSpec> {
        SystemSpec::two_level(self.e1, self.e2, self.hbar)
    }

    /// Resonant drive, global phase origin t0 = 0.
    pub fn drive(&self) -> Result<DriveSpec> {
        DriveSpec::resonant_two_level(self.v0, (self.e2 - self.e1) / self.hbar, 0.0)
    }
}

fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let ratio = hi / lo;
    (0..points)
        .map(|j| lo * ratio.powf(j as f64 / (points - 1) as f64))
        .collect()
}

fn lin_spaced(hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| hi * i as f64 / (points - 1) as f64)
        .collect()
}

fn check_grid(t_points: usize, de_points: usize, de_range: (f64, f64)) -> Result<()> {
    if t_points == 0 || de_points == 0 {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let (lo, hi) = de_range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidParameter(format!(
            "measurement-error range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Survival-probability surface
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SurfaceConfig {
    pub setup: TwoLevelSetup,
    /// Measurement window; the record is E = E1 throughout.
    pub tau: f64,
    pub t_points: usize,
    pub de_points: usize,
    /// Measurement-error span in units of the critical error, log-spaced.
    pub de_range: (f64, f64),
    pub method: Method,
    pub integrator: Option<IntegratorConfig>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            setup: TwoLevelSetup::default(),
            tau: 2.0 * PI,
            t_points: 200,
            de_points: 100,
            de_range: (0.1, 10.0),
            method: Method::ClosedForm,
            integrator: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub de_over_decrit: f64,
    pub t: f64,
    pub p1: f64,
}

/// Survival probability P1(t) on a (measurement error) x (time) grid:
/// one row per grid point, measurement error outer, time inner. Exposes the
/// transition from Rabi-like oscillation above the critical error to Zeno
/// inhibition below it.
pub fn fig1_surface(config: &SurfaceConfig) -> Result<Vec<SurfaceRow>> {
    check_grid(config.t_points, config.de_points, config.de_range)?;
    if !(config.tau.is_finite() && config.tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {}",
            config.tau
        )));
    }
    let system = config.setup.system()?;
    let drive = config.setup.drive()?;
    let de_crit = closed_form::critical_error(&system, &drive, config.tau)?;
    let ratios = log_spaced(config.de_range.0, config.de_range.1, config.de_points);
    let times = lin_spaced(config.tau, config.t_points);

    let rows: Result<Vec<Vec<SurfaceRow>>> = ratios
        .par_iter()
        .map(|&r| surface_column(config, &system, &drive, r, r * de_crit, &times))
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

fn surface_column(
    config: &SurfaceConfig,
    system: &SystemSpec,
    drive: &DriveSpec,
    ratio: f64,
    de: f64,
    times: &[f64],
) -> Result<Vec<SurfaceRow>> {
    let segment = MeterSegment::new(0.0, config.tau, config.setup.e1, DeltaE::Finite(de))?;
    match config.method {
        Method::ClosedForm => {
            let params = RegimeParams::compute(system, drive, &segment, config.tau)?;
            times
                .iter()
                .map(|&t| {
                    Ok(SurfaceRow {
                        de_over_decrit: ratio,
                        t,
                        p1: closed_form::survival_probability(&params, t)?,
                    })
                })
                .collect()
        }
        Method::Rk4 => {
            let cfg = config
                .integrator
                .unwrap_or_else(|| IntegratorConfig::default_for(&segment, system, drive));
            let mut state = StateVector::ground(2);
            let mut rows = Vec::with_capacity(times.len());
            for &t in times {
                if t > state.time() {
                    let sub =
                        MeterSegment::new(state.time(), t, segment.result_e(), segment.delta_e())?;
                    state = propagator::propagate_segment(
                        &state, system, drive, &sub, config.tau, &cfg,
                    )?;
                }
                rows.push(SurfaceRow {
                    de_over_decrit: ratio,
                    t,
                    p1: propagator::probabilities(&state)?[0],
                });
            }
            Ok(rows)
        }
    }
}

// ---------------------------------------------------------------------------
// Pulse-train transition scan
// ---------------------------------------------------------------------------

/// One entry of a pulse-count list: a train of n pulses, or an uninterrupted
/// measurement over the whole transfer window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseSpec {
    Pulses(u32),
    Continuous,
}

impl std::fmt::Display for PulseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PulseSpec::Pulses(n) => write!(f, "{n}"),
            PulseSpec::Continuous => f.write_str("continuous"),
        }
    }
}

impl Serialize for PulseSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PulseSpec::Pulses(n) => s.serialize_u32(*n),
            PulseSpec::Continuous => s.serialize_str("continuous"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PulseScanConfig {
    pub setup: TwoLevelSetup,
    pub pulses: Vec<PulseSpec>,
    /// Measured fraction of each pulse slot.
    pub duty: f64,
    pub de_points: usize,
    pub de_range: (f64, f64),
    pub method: Method,
    pub integrator: Option<IntegratorConfig>,
}

impl Default for PulseScanConfig {
    fn default() -> Self {
        PulseScanConfig {
            setup: TwoLevelSetup::default(),
            pulses: [1, 4, 16, 64, 100].map(PulseSpec::Pulses).to_vec(),
            duty: 0.01,
            de_points: 100,
            de_range: (0.1, 10.0),
            method: Method::ClosedForm,
            integrator: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseScanRow {
    pub pulses: PulseSpec,
    pub de_over_decrit: f64,
    pub p12: f64,
}

/// Transition probability P 1->2 at the end of an on-resonance pi pulse
/// (duration T = pi hbar / (2 V0)) versus the measurement error, for each
/// entry of the pulse list. The error axis is normalized by the critical
/// error of the transfer window, (E2 - E1) sqrt(hbar / (2 V0 T)). Rows are
/// ordered pulse spec outer, measurement error inner.
pub fn fig2_pulse_scan(config: &PulseScanConfig) -> Result<Vec<PulseScanRow>> {
    check_grid(1, config.de_points, config.de_range)?;
    if config.pulses.is_empty() {
        return Err(Error::InvalidParameter("empty pulse list".into()));
    }
    let system = config.setup.system()?;
    let drive = config.setup.drive()?;
    if !(config.setup.v0 > 0.0) {
        return Err(Error::InvalidParameter(
            "pulse scan needs a drive with V0 > 0".into(),
        ));
    }
    let t_pi = PI * config.setup.hbar / (2.0 * config.setup.v0);
    let de_crit = closed_form::critical_error(&system, &drive, t_pi)?;
    let ratios = log_spaced(config.de_range.0, config.de_range.1, config.de_points);

    let grid: Vec<(PulseSpec, f64)> = config
        .pulses
        .iter()
        .flat_map(|&p| ratios.iter().map(move |&r| (p, r)))
        .collect();
    grid.par_iter()
        .map(|&(spec, ratio)| {
            let de = DeltaE::Finite(ratio * de_crit);
            let schedule = match spec {
                PulseSpec::Continuous => schedules::continuous(t_pi, config.setup.e1, de)?,
                PulseSpec::Pulses(n) => {
                    schedules::pulsed(n, t_pi, config.duty, config.setup.e1, de)?
                }
            };
            let opts = RunOptions {
                method: config.method,
                integrator: config.integrator,
                ..Default::default()
            };
            let traj = schedules::run_schedule(
                &StateVector::ground(2),
                &system,
                &drive,
                &schedule,
                &opts,
            )?;
            let p = propagator::probabilities(traj.final_state())?;
            Ok(PulseScanRow {
                pulses: spec,
                de_over_decrit: ratio,
                p12: p[1],
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Regime report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub delta_e_crit: f64,
    pub regime: Regime,
    pub w: Complex64,
    /// Measurement damping rate Omega.
    pub damping: f64,
    /// Period of the level-population oscillation in the unmeasured limit,
    /// pi hbar / V0.
    pub rabi_period: f64,
}

/// Classification of a two-level resonant configuration at a given
/// measurement error, with the derived rates.
pub fn regime_report(setup: &TwoLevelSetup, tau: f64, delta_e: DeltaE) -> Result<RegimeReport> {
    let system = setup.system()?;
    let drive = setup.drive()?;
    let delta_e_crit = closed_form::critical_error(&system, &drive, tau)?;
    let segment = MeterSegment::new(0.0, tau, setup.e1, delta_e)?;
    let params = RegimeParams::compute(&system, &drive, &segment, tau)?;
    Ok(RegimeReport {
        delta_e_crit,
        regime: params.regime,
        w: params.w,
        damping: params.damping,
        rabi_period: PI * setup.hbar / setup.v0,
    })
}
