//! Exact analytic two-level solutions of the measured, driven dynamics, plus
//! the damped free evolution for any level count.
//!
//! Under a continuous energy measurement with result E, error dE and total
//! measurement time tau, each coefficient picks up a non-Hermitian damping
//! rate gamma_n = (E_n - E)^2 / (tau dE^2) on top of its phase rotation. With
//! a rotating two-level drive the coupled system still solves in closed form;
//! the solution is evaluated here in a mode decomposition
//! exp((mu +/- i w) t) rather than as exp(i q t) * {cos(wt), sin(wt)/w}, so
//! deep-Zeno parameters (|Im w| t of order 1e4) never overflow: each mode
//! exponent has a non-positive real part. The w -> 0 limit switches to a
//! series branch, making critical damping reachable in floating point.
//!
//! These functions double as the oracle for the numeric propagator: both
//! routes solve the same equations by entirely different means.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::types::{DeltaE, DriveSpec, MeterSegment, RegimeParams, StateVector, SystemSpec};

/// Below |w t| = 1e-6 the oscillatory factors are evaluated by series.
const SERIES_WT: f64 = 1e-6;

/// Damped free evolution (no drive): each amplitude evolves independently as
///
/// ```text
/// c_n(t) = exp(-i E_n t / hbar - (E_n - E)^2 t / (tau dE^2)) * c_n(0)
/// ```
///
/// so the state collapses around the measurement result with per-level time
/// constants tau dE^2 / (E_n - E)^2. With `DeltaE::Unmeasured` the real
/// exponent is exactly zero and the evolution is a pure phase.
pub fn free_decay(
    state0: &StateVector,
    system: &SystemSpec,
    result_e: f64,
    delta_e: DeltaE,
    tau: f64,
    t: f64,
) -> Result<StateVector> {
    if state0.levels() != system.levels() {
        return Err(Error::InvalidParameter(format!(
            "state has {} levels but the system has {}",
            state0.levels(),
            system.levels()
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "evolution time must be non-negative, got {t}"
        )));
    }
    if delta_e.is_measured() && !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive for a measured record, got {tau}"
        )));
    }
    // Reuse the segment damping formula; the time window is irrelevant here.
    let meter = MeterSegment::new(0.0, f64::max(t, 1.0), result_e, delta_e)?;
    let hbar = system.hbar();
    let amps: Vec<Complex64> = state0
        .amplitudes()
        .iter()
        .zip(system.energies())
        .map(|(c, &e_n)| {
            let gamma = meter.damping_rate(e_n, tau);
            c * Complex64::new(-gamma * t, -e_n / hbar * t).exp()
        })
        .collect();
    StateVector::from_parts(amps, state0.time() + t)
}

/// Exact evolution of a two-level state under simultaneous measurement and
/// rotating drive, for a segment-local time `t >= 0` (the clock starts at 0
/// at `state0`; the drive's `t0` must be expressed in that same local clock,
/// see [`crate::schedules::run_schedule`]).
///
/// `params` must come from [`RegimeParams::compute`] on the same system,
/// drive and measurement context. Writing p = coupling, q, w and the
/// per-level rates gamma_1, gamma_2, the amplitudes are
///
/// ```text
/// c1(t) = exp(-i E1 t/hbar - gamma_1 t + i q t)
///         * [ c1 cos(wt) + (q c1 + p e^{-i omega t0} c2) sin(wt) / (i w) ]
/// c2(t) = exp(-i E2 t/hbar - gamma_2 t - i q t)
///         * [ c2 cos(wt) - (q c2 - p e^{+i omega t0} c1) sin(wt) / (i w) ]
/// ```
///
/// evaluated in overflow-safe mode form, with the |wt| < 1e-6 series branch
/// sin(wt)/w -> t (1 - (wt)^2/6), cos(wt) -> 1 - (wt)^2/2.
pub fn two_level_evolve(
    state0: &StateVector,
    params: &RegimeParams,
    system: &SystemSpec,
    drive: &DriveSpec,
    t: f64,
) -> Result<StateVector> {
    let (e1, e2) = system.two_level_energies()?;
    if state0.levels() != 2 {
        return Err(Error::InvalidParameter(format!(
            "two-level evolution needs a 2-level state, got {}",
            state0.levels()
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "segment-local time must be non-negative, got {t}"
        )));
    }
    let (omega, t0) = match drive {
        DriveSpec::None => (0.0, 0.0),
        DriveSpec::ResonantTwoLevel { omega, t0, .. } => (*omega, *t0),
        DriveSpec::GeneralMatrix(_) => {
            return Err(Error::InvalidDrive(
                "closed-form evolution supports rotating two-level drives only".into(),
            ))
        }
    };

    let hbar = system.hbar();
    let (gamma1, gamma2) = params.level_decays();
    let p = params.coupling;
    let q = params.q;
    let w = params.w;

    let a = state0.amplitudes()[0];
    let b = state0.amplitudes()[1];
    let phase = Complex64::from_polar(1.0, omega * t0);
    let k1 = q * a + p * phase.conj() * b;
    let k2 = q * b - p * phase * a;

    let i = Complex64::I;
    let mu1 = Complex64::new(-gamma1, -e1 / hbar);
    let mu2 = Complex64::new(-gamma2, -e2 / hbar);

    let (c1, c2) = if p == 0.0 {
        // undriven: the levels decouple and evolve exactly; the mode form
        // degenerates here (w = +/- q) and its sqrt rounding would otherwise
        // leave a ~1e-16 residue masking deep decay
        (a * (mu1 * t).exp(), b * (mu2 * t).exp())
    } else if w.norm() * t < SERIES_WT {
        let wt2 = (w * t) * (w * t);
        let cos_s = 1.0 - wt2 / 2.0;
        let sinc_s = t * (1.0 - wt2 / 6.0);
        let c1 = ((mu1 + i * q) * t).exp() * (a * cos_s - i * k1 * sinc_s);
        let c2 = ((mu2 - i * q) * t).exp() * (b * cos_s + i * k2 * sinc_s);
        (c1, c2)
    } else {
        // each exponent has Re <= 0: |Im w| never exceeds the mean decay rate
        let e1p = ((mu1 + i * (q + w)) * t).exp();
        let e1m = ((mu1 + i * (q - w)) * t).exp();
        let e2p = ((mu2 + i * (w - q)) * t).exp();
        let e2m = ((mu2 - i * (q + w)) * t).exp();
        let c1 = a * (e1p + e1m) / 2.0 - k1 * (e1p - e1m) / (2.0 * w);
        let c2 = b * (e2p + e2m) / 2.0 + k2 * (e2p - e2m) / (2.0 * w);
        (c1, c2)
    };
    debug_assert!(
        c1.is_finite() && c2.is_finite(),
        "closed form produced non-finite amplitudes"
    );
    StateVector::from_parts(vec![c1, c2], state0.time() + t)
}

/// Probability of still finding the system in level 1 at time `t`, for the
/// resonant record E = E1 starting from level 1:
///
/// ```text
/// P1(t) = 1 / (1 + | p / (Omega + w cot(wt)) |^2),   w^2 = p^2 - Omega^2
/// ```
///
/// computed in complex-robust form: for w^2 < 0, w cot(wt) = |w| coth(|w| t);
/// for |wt| < 1e-6 the series w cot(wt) ~ 1/t - w^2 t / 3. `t = 0` returns 1
/// (the continuity limit of the diverging cotangent); negative `t` is an
/// error.
pub fn survival_probability(params: &RegimeParams, t: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time must be non-negative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let p = params.coupling;
    let omega = params.damping;
    let w_sq = p * p - omega * omega;
    let w_abs = w_sq.abs().sqrt();
    let w_cot = if w_abs * t < SERIES_WT {
        1.0 / t - w_sq * t / 3.0
    } else if w_sq > 0.0 {
        w_abs * (w_abs * t).cos() / (w_abs * t).sin()
    } else {
        w_abs / (w_abs * t).tanh()
    };
    let denom = omega + w_cot;
    if denom == 0.0 {
        // cot has swept through -Omega: full transfer point
        return Ok(if p == 0.0 { 1.0 } else { 0.0 });
    }
    let ratio_sq = (p / denom) * (p / denom);
    Ok(1.0 / (1.0 + ratio_sq))
}

/// Measurement error at which the driven two-level system is critically
/// damped:
///
/// ```text
/// dE_crit = (E2 - E1) * sqrt(hbar / (2 V0 tau))
/// ```
///
/// Smaller errors (more accurate meters) put the system in the overdamped,
/// Zeno-inhibited regime; larger errors leave Rabi-like oscillation.
pub fn critical_error(system: &SystemSpec, drive: &DriveSpec, tau: f64) -> Result<f64> {
    let (e1, e2) = system.two_level_energies()?;
    let v0 = drive.v0()?;
    if !(v0 > 0.0) {
        return Err(Error::InvalidDrive(format!(
            "critical error requires a drive with V0 > 0, got {v0}"
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    Ok((e2 - e1) * (system.hbar() / (2.0 * v0 * tau)).sqrt())
}
