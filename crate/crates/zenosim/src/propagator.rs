//! Fixed-step RK4 integration of the measured, driven coefficient equations
//! for any level count:
//!
//! ```text
//! dc_n/dt = [-i E_n/hbar - (E_n - E)^2/(tau dE^2)] c_n
//!           - (i/hbar) sum_k V_nk(t) c_k
//! ```
//!
//! The integrator is deliberately plain: classical RK4 with a fixed step that
//! always lands exactly on segment boundaries (E and dE are discontinuous
//! there, and oracle comparisons need deterministic step placement).
//! Amplitudes are never renormalized mid-run; if the total squared norm drops
//! below 1e-300 the run errors out instead of silently rescaling.

// indexed loops keep the stage arithmetic aligned across the k buffers
#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::types::{DriveSpec, MeterSegment, StateVector, SystemSpec, NORM_UNDERFLOW};

pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// RK4 step; shrunk automatically to land on segment ends.
    pub step: f64,
    /// Safety bound on the number of steps per segment.
    pub max_steps: u64,
}

impl IntegratorConfig {
    pub fn new(step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "integrator step must be positive, got {step}"
            )));
        }
        Ok(IntegratorConfig {
            step,
            max_steps: DEFAULT_MAX_STEPS,
        })
    }

    /// Default step for a segment: duration/1000, capped at 1e-3 * hbar/V0
    /// when a drive is present.
    pub fn default_for(segment: &MeterSegment, system: &SystemSpec, drive: &DriveSpec) -> Self {
        let mut step = segment.duration() / 1000.0;
        if let Ok(v0) = drive.v0() {
            if v0 > 0.0 {
                step = step.min(1e-3 * system.hbar() / v0);
            }
        }
        IntegratorConfig {
            step,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// Right-hand side of the coefficient equations at time `t` within `segment`.
/// With an unmeasured segment the real (damping) part is exactly zero.
pub fn rhs(
    state: &StateVector,
    system: &SystemSpec,
    drive: &DriveSpec,
    segment: &MeterSegment,
    tau: f64,
    t: f64,
) -> Result<Vec<Complex64>> {
    let ctx = RhsContext::new(system, drive, segment, tau)?;
    let mut out = vec![Complex64::ZERO; state.levels()];
    ctx.eval(t, state.amplitudes(), &mut out)?;
    Ok(out)
}

/// One signed RK4 step of size `dt` from the state's current time. Negative
/// `dt` steps backwards (useful for reversibility checks in the unitary
/// limit).
pub fn rk4_step(
    state: &StateVector,
    system: &SystemSpec,
    drive: &DriveSpec,
    segment: &MeterSegment,
    tau: f64,
    dt: f64,
) -> Result<StateVector> {
    let ctx = RhsContext::new(system, drive, segment, tau)?;
    let mut ws = Workspace::new(state.levels());
    let mut amps = state.amplitudes().to_vec();
    ctx.rk4_step(state.time(), dt, &mut amps, &mut ws)?;
    StateVector::from_parts(amps, state.time() + dt)
}

/// Propagate across one measurement segment with fixed-step RK4; the final
/// partial step is shrunk to land exactly on `segment.t_end()`.
pub fn propagate_segment(
    state0: &StateVector,
    system: &SystemSpec,
    drive: &DriveSpec,
    segment: &MeterSegment,
    tau: f64,
    config: &IntegratorConfig,
) -> Result<StateVector> {
    if (state0.time() - segment.t_start()).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "state time {} does not match segment start {}",
            state0.time(),
            segment.t_start()
        )));
    }
    if !(config.step.is_finite() && config.step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "integrator step must be positive, got {}",
            config.step
        )));
    }

    let ctx = RhsContext::new(system, drive, segment, tau)?;
    if state0.levels() != system.levels() {
        return Err(Error::InvalidParameter(format!(
            "state has {} levels but the system has {}",
            state0.levels(),
            system.levels()
        )));
    }

    let duration = segment.duration();
    let h = config.step.min(duration);
    let n_full = (duration / h).floor() as u64;
    if n_full.saturating_add(1) > config.max_steps {
        return Err(Error::MaxStepsExceeded {
            required: n_full + 1,
            max: config.max_steps,
        });
    }

    let t0 = segment.t_start();
    let mut amps = state0.amplitudes().to_vec();
    let mut ws = Workspace::new(amps.len());
    for i in 0..n_full {
        let t = t0 + i as f64 * h;
        ctx.rk4_step(t, h, &mut amps, &mut ws)?;
        check_norm(&amps, t + h)?;
    }
    let t_last = t0 + n_full as f64 * h;
    let rem = segment.t_end() - t_last;
    if rem > duration * 1e-15 {
        ctx.rk4_step(t_last, rem, &mut amps, &mut ws)?;
        check_norm(&amps, segment.t_end())?;
    }
    StateVector::from_parts(amps, segment.t_end())
}

/// Normalized level populations P_n = |c_n|^2 / sum_k |c_k|^2.
pub fn probabilities(state: &StateVector) -> Result<Vec<f64>> {
    state.check_norm()?;
    let norm = state.norm_sq();
    Ok(state
        .amplitudes()
        .iter()
        .map(|c| c.norm_sqr() / norm)
        .collect())
}

fn check_norm(amps: &[Complex64], time: f64) -> Result<()> {
    let n: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
    if !(n >= NORM_UNDERFLOW) {
        return Err(Error::NormUnderflow { time, norm_sq: n });
    }
    Ok(())
}

/// Precomputed per-segment pieces of the right-hand side.
struct RhsContext<'a> {
    /// diagonal generator: -gamma_n - i E_n / hbar
    diag: Vec<Complex64>,
    inv_hbar: f64,
    drive: &'a DriveSpec,
    levels: usize,
}

impl<'a> RhsContext<'a> {
    fn new(
        system: &SystemSpec,
        drive: &'a DriveSpec,
        segment: &MeterSegment,
        tau: f64,
    ) -> Result<Self> {
        if segment.is_measured() && !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive for a measured segment, got {tau}"
            )));
        }
        let hbar = system.hbar();
        let diag = system
            .energies()
            .iter()
            .map(|&e_n| Complex64::new(-segment.damping_rate(e_n, tau), -e_n / hbar))
            .collect();
        Ok(RhsContext {
            diag,
            inv_hbar: 1.0 / hbar,
            drive,
            levels: system.levels(),
        })
    }

    fn eval(&self, t: f64, c: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        for n in 0..self.levels {
            out[n] = self.diag[n] * c[n];
        }
        match self.drive {
            DriveSpec::None => {}
            DriveSpec::ResonantTwoLevel { v0, omega, t0 } => {
                if self.levels != 2 {
                    return Err(Error::InvalidDrive(format!(
                        "resonant two-level drive applied to a {}-level system",
                        self.levels
                    )));
                }
                if *v0 != 0.0 {
                    let v12 = Complex64::from_polar(v0 * self.inv_hbar, omega * (t - t0));
                    out[0] -= Complex64::I * v12 * c[1];
                    out[1] -= Complex64::I * v12.conj() * c[0];
                }
            }
            DriveSpec::GeneralMatrix(_) => {
                let m = self.drive.matrix_at(t, self.levels)?;
                for n in 0..self.levels {
                    let mut acc = Complex64::ZERO;
                    for k in 0..self.levels {
                        acc += m[n * self.levels + k] * c[k];
                    }
                    out[n] -= Complex64::I * self.inv_hbar * acc;
                }
            }
        }
        Ok(())
    }

    fn rk4_step(&self, t: f64, dt: f64, c: &mut [Complex64], ws: &mut Workspace) -> Result<()> {
        let n = c.len();
        let half = dt / 2.0;
        self.eval(t, c, &mut ws.k1)?;
        for i in 0..n {
            ws.tmp[i] = c[i] + half * ws.k1[i];
        }
        self.eval(t + half, &ws.tmp, &mut ws.k2)?;
        for i in 0..n {
            ws.tmp[i] = c[i] + half * ws.k2[i];
        }
        self.eval(t + half, &ws.tmp, &mut ws.k3)?;
        for i in 0..n {
            ws.tmp[i] = c[i] + dt * ws.k3[i];
        }
        self.eval(t + dt, &ws.tmp, &mut ws.k4)?;
        let sixth = dt / 6.0;
        for i in 0..n {
            c[i] += sixth * (ws.k1[i] + 2.0 * (ws.k2[i] + ws.k3[i]) + ws.k4[i]);
        }
        Ok(())
    }
}

struct Workspace {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k1: vec![Complex64::ZERO; n],
            k2: vec![Complex64::ZERO; n],
            k3: vec![Complex64::ZERO; n],
            k4: vec![Complex64::ZERO; n],
            tmp: vec![Complex64::ZERO; n],
        }
    }
}
