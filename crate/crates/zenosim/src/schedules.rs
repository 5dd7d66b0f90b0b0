//! Measurement strategies (continuous, pulsed trains, stroboscopic QND) and
//! chained propagation of a state across a schedule.
//!
//! A schedule is a piecewise-constant record; propagation carries the state
//! across segment boundaries without resets, toggling only the damping term.
//! Two conventions matter throughout:
//!
//! - The drive is phase-coherent across the whole run: its `t0` is a global
//!   clock origin, and segment evolution sees the drive at absolute time.
//!   For the closed-form path this is done by re-anchoring `t0` into each
//!   segment's local clock.
//! - The damping denominator uses tau = the schedule's *total* measurement
//!   time by default ([`TauConvention::Total`]). That is the reading under
//!   which a contiguous pulse train degenerates exactly to a continuous
//!   measurement. [`TauConvention::PerSegment`] (tau = each segment's own
//!   duration) is available for comparison.

use crate::closed_form;
use crate::error::{Error, Result};
use crate::propagator::{self, IntegratorConfig};
use crate::types::{
    DeltaE, DriveSpec, MeasurementSchedule, MeterSegment, RegimeParams, StateVector, SystemSpec,
    TILING_TOL,
};

/// How to evolve within each segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Exact two-level closed form (two-level systems, rotating drives only).
    #[default]
    ClosedForm,
    /// Fixed-step RK4 (any level count, any drive).
    Rk4,
}

/// Which tau enters the damping denominator on each segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauConvention {
    /// The schedule's total measurement time (default).
    #[default]
    Total,
    /// Each segment's own duration.
    PerSegment,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub method: Method,
    pub tau_convention: TauConvention,
    /// RK4 settings; per-segment defaults when `None`.
    pub integrator: Option<IntegratorConfig>,
    /// Emit states at every multiple of this interval in addition to segment
    /// boundaries.
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub state: StateVector,
    /// True for the initial state and segment-end states.
    pub is_boundary: bool,
}

/// Time-ordered states produced by [`run_schedule`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        &self.points.last().expect("trajectory is never empty").state
    }
}

/// Continuous measurement: one measured segment covering [0, tau], with the
/// total measurement time equal to tau (also when `delta_e` is `Unmeasured`,
/// i.e. a null measurement).
pub fn continuous(tau: f64, result_e: f64, delta_e: DeltaE) -> Result<MeasurementSchedule> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "continuous schedule needs tau > 0, got {tau}"
        )));
    }
    let seg = MeterSegment::new(0.0, tau, result_e, delta_e)?;
    MeasurementSchedule::with_tau(vec![seg], tau)
}

/// Train of `n` measurement pulses over `[0, total_time]`: the k-th pulse is
/// on from k*T/n to k*T/n + duty*T for k = 0..n-1, interleaved with
/// unmeasured gaps. The total measurement time is n * duty * T; `n * duty`
/// may not exceed 1, and at n * duty = 1 the train is contiguous (zero-length
/// gaps are elided), recovering the continuous schedule.
pub fn pulsed(
    n: u32,
    total_time: f64,
    duty: f64,
    result_e: f64,
    delta_e: DeltaE,
) -> Result<MeasurementSchedule> {
    if n == 0 {
        return Err(Error::InvalidParameter("pulse count must be >= 1".into()));
    }
    if !(total_time.is_finite() && total_time > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "total time must be positive, got {total_time}"
        )));
    }
    if !(duty.is_finite() && duty > 0.0 && duty <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "duty must lie in (0, 1], got {duty}"
        )));
    }
    let pulse_len = duty * total_time;
    if n as f64 * duty > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "{n} pulses of duration {pulse_len} do not fit in total time {total_time}"
        )));
    }

    let snap = TILING_TOL * total_time.max(1.0);
    let mut segments = Vec::with_capacity(2 * n as usize);
    for k in 0..n {
        let t_on = k as f64 * total_time / n as f64;
        let t_next = (k + 1) as f64 * total_time / n as f64;
        let t_off = t_on + pulse_len;
        if t_off >= t_next - snap {
            // contiguous pulses: snap to the slot boundary, no gap segment
            segments.push(MeterSegment::new(t_on, t_next, result_e, delta_e)?);
        } else {
            segments.push(MeterSegment::new(t_on, t_off, result_e, delta_e)?);
            segments.push(MeterSegment::unmeasured(t_off, t_next)?);
        }
    }
    MeasurementSchedule::with_tau(segments, n as f64 * pulse_len)
}

/// Stroboscopic quantum-non-demolition monitoring of a resonantly driven
/// two-level system: narrow measurement pulses centered at the times
/// t_k = k * pi * hbar / V0 (k = 1..periods) where the level-1 population
/// returns to 1, followed by one further free transfer window of duration
/// pi * hbar / (2 V0). Timed this way, the meter reads the population at its
/// revival points and barely perturbs the subsequent transfer.
pub fn stroboscopic_qnd(
    periods: u32,
    pulse_width: f64,
    result_e: f64,
    delta_e: DeltaE,
    system: &SystemSpec,
    drive: &DriveSpec,
) -> Result<MeasurementSchedule> {
    if periods == 0 {
        return Err(Error::InvalidParameter("periods must be >= 1".into()));
    }
    let (e1, e2) = system.two_level_energies()?;
    let v0 = drive.v0()?;
    if !(v0 > 0.0) {
        return Err(Error::InvalidDrive(
            "stroboscopic monitoring needs a drive with V0 > 0".into(),
        ));
    }
    if let DriveSpec::ResonantTwoLevel { omega, .. } = drive {
        let gap = (e2 - e1) / system.hbar();
        if (omega - gap).abs() > 1e-9 * gap.abs().max(1.0) {
            return Err(Error::InvalidDrive(format!(
                "stroboscopic monitoring assumes resonance; omega = {omega} but the gap is {gap}"
            )));
        }
    }
    // period of the population oscillation P1 = cos^2(V0 t / hbar)
    let period = std::f64::consts::PI * system.hbar() / v0;
    if !(pulse_width.is_finite() && pulse_width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pulse width must be positive, got {pulse_width}"
        )));
    }
    if pulse_width >= period / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "pulse width {pulse_width} must be below half the population period {period}"
        )));
    }

    let mut segments = Vec::with_capacity(2 * periods as usize + 1);
    let mut prev = 0.0;
    for k in 1..=periods {
        let center = k as f64 * period;
        let on = center - pulse_width / 2.0;
        let off = center + pulse_width / 2.0;
        segments.push(MeterSegment::unmeasured(prev, on)?);
        segments.push(MeterSegment::new(on, off, result_e, delta_e)?);
        prev = off;
    }
    segments.push(MeterSegment::unmeasured(
        prev,
        periods as f64 * period + period / 2.0,
    )?);
    MeasurementSchedule::with_tau(segments, periods as f64 * pulse_width)
}

/// Advance a state segment by segment across `schedule`, keeping the drive
/// phase-coherent and the amplitudes continuous across boundaries. Returns
/// the states at every segment boundary plus, if requested, dense samples at
/// multiples of `sample_interval`. Identical inputs produce bit-identical
/// trajectories.
pub fn run_schedule(
    state0: &StateVector,
    system: &SystemSpec,
    drive: &DriveSpec,
    schedule: &MeasurementSchedule,
    options: &RunOptions,
) -> Result<Trajectory> {
    if state0.levels() != system.levels() {
        return Err(Error::InvalidParameter(format!(
            "state has {} levels but the system has {}",
            state0.levels(),
            system.levels()
        )));
    }
    let first_start = schedule.segments()[0].t_start();
    if (state0.time() - first_start).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "state time {} does not match the schedule start {first_start}",
            state0.time()
        )));
    }
    if let Some(dt) = options.sample_interval {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
    }
    if options.method == Method::ClosedForm {
        if system.levels() != 2 {
            return Err(Error::InvalidParameter(
                "the closed-form method requires a two-level system; use Rk4".into(),
            ));
        }
        if matches!(drive, DriveSpec::GeneralMatrix(_)) {
            return Err(Error::InvalidDrive(
                "the closed-form method supports rotating two-level drives only; use Rk4".into(),
            ));
        }
    }

    let boundary_snap = TILING_TOL * schedule.total_time().max(1.0);
    let mut points = vec![TrajectoryPoint {
        state: state0.at_time(first_start),
        is_boundary: true,
    }];

    for segment in schedule.segments() {
        let tau = match options.tau_convention {
            TauConvention::Total => schedule.tau_total_measurement(),
            TauConvention::PerSegment => segment.duration(),
        };
        let seg_start_state = points.last().unwrap().state.clone();

        // interior sample times strictly inside the segment
        let mut interior = Vec::new();
        if let Some(dt) = options.sample_interval {
            let mut k = (segment.t_start() / dt).floor() as i64;
            loop {
                let t = k as f64 * dt;
                if t > segment.t_end() - boundary_snap {
                    break;
                }
                if t > segment.t_start() + boundary_snap {
                    interior.push(t);
                }
                k += 1;
            }
        }

        match options.method {
            Method::ClosedForm => {
                let local_drive = drive.shifted_origin(segment.t_start())?;
                let params = RegimeParams::compute(system, drive, segment, tau)?;
                for &t in &interior {
                    let st = closed_form::two_level_evolve(
                        &seg_start_state,
                        &params,
                        system,
                        &local_drive,
                        t - segment.t_start(),
                    )?;
                    points.push(TrajectoryPoint {
                        state: st.at_time(t),
                        is_boundary: false,
                    });
                }
                let end = closed_form::two_level_evolve(
                    &seg_start_state,
                    &params,
                    system,
                    &local_drive,
                    segment.duration(),
                )?;
                points.push(TrajectoryPoint {
                    state: end.at_time(segment.t_end()),
                    is_boundary: true,
                });
            }
            Method::Rk4 => {
                let config = options
                    .integrator
                    .unwrap_or_else(|| IntegratorConfig::default_for(segment, system, drive));
                let mut state = seg_start_state;
                let mut cursor = segment.t_start();
                for &t in interior.iter().chain(std::iter::once(&segment.t_end())) {
                    let sub = MeterSegment::new(cursor, t, segment.result_e(), segment.delta_e())?;
                    state =
                        propagator::propagate_segment(&state, system, drive, &sub, tau, &config)?;
                    points.push(TrajectoryPoint {
                        state: state.clone(),
                        is_boundary: t == segment.t_end(),
                    });
                    cursor = t;
                }
            }
        }
    }
    Ok(Trajectory { points })
}
