//! Domain types, unit conventions, and validation shared by every other
//! module.
//!
//! Conventions: energies, measurement results and measurement errors carry
//! energy units; times carry time units; `hbar` carries action units and
//! defaults to 1 so the natural choice E2 - E1 = V0 = hbar = 1 works out of
//! the box. All types are immutable values after construction and are `Send +
//! Sync`; nothing in the crate holds global mutable state.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result, ScheduleErrorKind};

/// Squared-norm floor below which evolution is reported as underflow rather
/// than silently renormalized.
pub const NORM_UNDERFLOW: f64 = 1e-300;

/// Absolute tolerance for schedule tiling checks (adjacency and start-at-zero).
pub const TILING_TOL: f64 = 1e-12;

/// Relative tolerance for the Hermiticity check on sampled drive matrices.
pub const HERMITICITY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// SystemSpec
// ---------------------------------------------------------------------------

/// Eigenenergies of the unmeasured, unperturbed Hamiltonian, plus the hbar
/// convention.
///
/// Levels are identified by position, not by value; duplicate energies are
/// allowed (their damping rates and phases then coincide, so no tie-breaking
/// is ever needed).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    energies: Vec<f64>,
    hbar: f64,
}

impl SystemSpec {
    pub fn new(energies: Vec<f64>, hbar: f64) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::InvalidSystem(format!(
                "need at least 2 levels, got {}",
                energies.len()
            )));
        }
        if let Some(bad) = energies.iter().find(|e| !e.is_finite()) {
            return Err(Error::InvalidSystem(format!("non-finite energy {bad}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "hbar must be positive and finite, got {hbar}"
            )));
        }
        Ok(SystemSpec { energies, hbar })
    }

    /// Natural-units constructor (hbar = 1).
    pub fn with_unit_hbar(energies: Vec<f64>) -> Result<Self> {
        Self::new(energies, 1.0)
    }

    pub fn two_level(e1: f64, e2: f64, hbar: f64) -> Result<Self> {
        Self::new(vec![e1, e2], hbar)
    }

    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, level: usize) -> f64 {
        self.energies[level]
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// (E1, E2) for a two-level system; error otherwise.
    pub fn two_level_energies(&self) -> Result<(f64, f64)> {
        if self.levels() != 2 {
            return Err(Error::InvalidSystem(format!(
                "operation requires exactly 2 levels, got {}",
                self.levels()
            )));
        }
        Ok((self.energies[0], self.energies[1]))
    }
}

// ---------------------------------------------------------------------------
// DriveSpec
// ---------------------------------------------------------------------------

/// Hermitian matrix of a general drive, supplied as a function of time
/// returning the row-major `dim x dim` matrix elements.
#[derive(Clone)]
pub struct GeneralDrive {
    dim: usize,
    matrix_fn: Arc<dyn Fn(f64) -> Vec<Complex64> + Send + Sync>,
}

impl fmt::Debug for GeneralDrive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralDrive")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// External perturbation driving transitions between levels.
///
/// `ResonantTwoLevel` is the rotating off-diagonal drive
/// V12 = conj(V21) = v0 * exp(i * omega * (t - t0)), V11 = V22 = 0; `omega`
/// need not match the level gap, so detuned drives use the same variant. The
/// phase origin `t0` is interpreted in the same clock as the time passed to
/// whatever evaluates the drive, which is how phase coherence across
/// measurement segments is maintained (see [`crate::schedules::run_schedule`]).
#[derive(Debug, Clone)]
pub enum DriveSpec {
    None,
    ResonantTwoLevel { v0: f64, omega: f64, t0: f64 },
    GeneralMatrix(GeneralDrive),
}

impl DriveSpec {
    pub fn none() -> Self {
        DriveSpec::None
    }

    pub fn resonant_two_level(v0: f64, omega: f64, t0: f64) -> Result<Self> {
        if !(v0.is_finite() && v0 >= 0.0) {
            return Err(Error::InvalidDrive(format!(
                "v0 must be non-negative and finite, got {v0}"
            )));
        }
        if !omega.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidDrive(format!(
                "omega and t0 must be finite, got omega = {omega}, t0 = {t0}"
            )));
        }
        Ok(DriveSpec::ResonantTwoLevel { v0, omega, t0 })
    }

    /// Resonant drive for the given two-level system: omega = (E2 - E1)/hbar,
    /// phase origin t0 = 0.
    pub fn resonant_for(system: &SystemSpec, v0: f64) -> Result<Self> {
        let (e1, e2) = system.two_level_energies()?;
        Self::resonant_two_level(v0, (e2 - e1) / system.hbar(), 0.0)
    }

    pub fn general_matrix<F>(dim: usize, matrix_fn: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<Complex64> + Send + Sync + 'static,
    {
        if dim < 2 {
            return Err(Error::InvalidDrive(format!(
                "general drive needs dim >= 2, got {dim}"
            )));
        }
        Ok(DriveSpec::GeneralMatrix(GeneralDrive {
            dim,
            matrix_fn: Arc::new(matrix_fn),
        }))
    }

    pub fn is_none(&self) -> bool {
        matches!(self, DriveSpec::None)
    }

    /// Drive amplitude V0; zero for `None`, error for a general matrix (which
    /// has no single amplitude).
    pub fn v0(&self) -> Result<f64> {
        match self {
            DriveSpec::None => Ok(0.0),
            DriveSpec::ResonantTwoLevel { v0, .. } => Ok(*v0),
            DriveSpec::GeneralMatrix(_) => Err(Error::InvalidDrive(
                "general-matrix drive has no scalar amplitude".into(),
            )),
        }
    }

    /// Same drive expressed in a clock whose origin sits at `t_shift` of the
    /// current one (used for segment-local evaluation of the closed form).
    pub fn shifted_origin(&self, t_shift: f64) -> Result<Self> {
        match self {
            DriveSpec::None => Ok(DriveSpec::None),
            DriveSpec::ResonantTwoLevel { v0, omega, t0 } => Ok(DriveSpec::ResonantTwoLevel {
                v0: *v0,
                omega: *omega,
                t0: t0 - t_shift,
            }),
            DriveSpec::GeneralMatrix(_) => Err(Error::InvalidDrive(
                "general-matrix drives cannot be re-anchored; evaluate them in absolute time"
                    .into(),
            )),
        }
    }

    /// Sample the drive matrix at time `t` for an `n_levels` system, checking
    /// the Hermiticity invariant on every sample.
    pub fn matrix_at(&self, t: f64, n_levels: usize) -> Result<Vec<Complex64>> {
        match self {
            DriveSpec::None => Ok(vec![Complex64::ZERO; n_levels * n_levels]),
            DriveSpec::ResonantTwoLevel { v0, omega, t0 } => {
                if n_levels != 2 {
                    return Err(Error::InvalidDrive(format!(
                        "resonant two-level drive applied to a {n_levels}-level system"
                    )));
                }
                let v12 = Complex64::from_polar(*v0, omega * (t - t0));
                Ok(vec![Complex64::ZERO, v12, v12.conj(), Complex64::ZERO])
            }
            DriveSpec::GeneralMatrix(g) => {
                if n_levels != g.dim {
                    return Err(Error::InvalidDrive(format!(
                        "drive matrix is {}x{} but the system has {} levels",
                        g.dim, g.dim, n_levels
                    )));
                }
                let m = (g.matrix_fn)(t);
                if m.len() != g.dim * g.dim {
                    return Err(Error::InvalidDrive(format!(
                        "drive matrix function returned {} elements, expected {}",
                        m.len(),
                        g.dim * g.dim
                    )));
                }
                check_hermitian(&m, g.dim, t)?;
                Ok(m)
            }
        }
    }
}

fn check_hermitian(m: &[Complex64], dim: usize, t: f64) -> Result<()> {
    let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    let mut dev = 0.0_f64;
    for i in 0..dim {
        for j in i..dim {
            dev = dev.max((m[i * dim + j] - m[j * dim + i].conj()).norm());
        }
    }
    if dev > HERMITICITY_TOL * scale {
        return Err(Error::NonHermitianDrive {
            time: t,
            deviation: dev,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Measurement record types
// ---------------------------------------------------------------------------

/// Instrumental measurement error. `Unmeasured` stands for an infinitely
/// coarse meter: the damping term is exactly zero, with no inf/NaN arithmetic
/// anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaE {
    Finite(f64),
    Unmeasured,
}

impl DeltaE {
    pub fn is_measured(&self) -> bool {
        matches!(self, DeltaE::Finite(_))
    }
}

impl fmt::Display for DeltaE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaE::Finite(v) => write!(f, "{v}"),
            DeltaE::Unmeasured => f.write_str("unmeasured"),
        }
    }
}

/// One piece of a piecewise-constant measurement record: over
/// `[t_start, t_end)` the meter reads `result_e` with error `delta_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterSegment {
    t_start: f64,
    t_end: f64,
    result_e: f64,
    delta_e: DeltaE,
}

impl MeterSegment {
    pub fn new(t_start: f64, t_end: f64, result_e: f64, delta_e: DeltaE) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::InvalidParameter(format!(
                "segment must have t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        if !result_e.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "segment result E must be finite, got {result_e}"
            )));
        }
        if let DeltaE::Finite(de) = delta_e {
            if !(de.is_finite() && de > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "finite measurement error must be positive, got {de}"
                )));
            }
        }
        Ok(MeterSegment {
            t_start,
            t_end,
            result_e,
            delta_e,
        })
    }

    pub fn measured(t_start: f64, t_end: f64, result_e: f64, delta_e: f64) -> Result<Self> {
        Self::new(t_start, t_end, result_e, DeltaE::Finite(delta_e))
    }

    pub fn unmeasured(t_start: f64, t_end: f64) -> Result<Self> {
        Self::new(t_start, t_end, 0.0, DeltaE::Unmeasured)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn result_e(&self) -> f64 {
        self.result_e
    }

    pub fn delta_e(&self) -> DeltaE {
        self.delta_e
    }

    pub fn is_measured(&self) -> bool {
        self.delta_e.is_measured()
    }

    /// Damping rate (E_level - E)^2 / (tau * dE^2) applied to a level while
    /// this segment is in force; exactly zero when unmeasured.
    ///
    /// `tau` is the governing total measurement time and must be positive for
    /// measured segments (guaranteed by schedule validation).
    pub fn damping_rate(&self, level_energy: f64, tau: f64) -> f64 {
        match self.delta_e {
            DeltaE::Unmeasured => 0.0,
            DeltaE::Finite(de) => {
                let d = level_energy - self.result_e;
                d * d / (tau * de * de)
            }
        }
    }
}

/// Time-ordered, gap-free measurement record covering `[0, t_total]`, plus
/// the total measurement time `tau` that enters every damping denominator.
///
/// `tau` defaults to the summed duration of the measured (finite-error)
/// segments; [`MeasurementSchedule::with_tau`] overrides it where a preset
/// defines tau by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSchedule {
    segments: Vec<MeterSegment>,
    tau: f64,
}

impl MeasurementSchedule {
    /// Validating constructor; tau = sum of measured-segment durations.
    pub fn new(segments: Vec<MeterSegment>) -> Result<Self> {
        let tau = segments
            .iter()
            .filter(|s| s.is_measured())
            .map(|s| s.duration())
            .sum();
        Self::with_tau(segments, tau)
    }

    /// Validating constructor with an explicit total measurement time.
    pub fn with_tau(segments: Vec<MeterSegment>, tau: f64) -> Result<Self> {
        validate_segments(&segments)?;
        let any_measured = segments.iter().any(|s| s.is_measured());
        if any_measured && !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau_total_measurement must be positive when any segment is measured, got {tau}"
            )));
        }
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tau_total_measurement must be finite and non-negative, got {tau}"
            )));
        }
        Ok(MeasurementSchedule { segments, tau })
    }

    pub fn segments(&self) -> &[MeterSegment] {
        &self.segments
    }

    pub fn tau_total_measurement(&self) -> f64 {
        self.tau
    }

    pub fn total_time(&self) -> f64 {
        self.segments.last().map(|s| s.t_end()).unwrap_or(0.0)
    }

    pub fn has_measured_segments(&self) -> bool {
        self.segments.iter().any(|s| s.is_measured())
    }
}

fn validate_segments(segments: &[MeterSegment]) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::Schedule {
            index: 0,
            kind: ScheduleErrorKind::Empty,
        });
    }
    if segments[0].t_start().abs() > TILING_TOL {
        return Err(Error::Schedule {
            index: 0,
            kind: ScheduleErrorKind::DoesNotStartAtZero,
        });
    }
    for (i, pair) in segments.windows(2).enumerate() {
        let diff = pair[1].t_start() - pair[0].t_end();
        if diff > TILING_TOL {
            return Err(Error::Schedule {
                index: i + 1,
                kind: ScheduleErrorKind::Gap,
            });
        }
        if diff < -TILING_TOL {
            return Err(Error::Schedule {
                index: i + 1,
                kind: ScheduleErrorKind::Overlap,
            });
        }
    }
    // Segment-local invariants are enforced by MeterSegment constructors; the
    // re-check here keeps raw-deserialized segments honest too.
    for (i, s) in segments.iter().enumerate() {
        if s.duration() <= 0.0 {
            return Err(Error::Schedule {
                index: i,
                kind: ScheduleErrorKind::NonPositiveDuration,
            });
        }
        if let DeltaE::Finite(de) = s.delta_e() {
            if de <= 0.0 {
                return Err(Error::Schedule {
                    index: i,
                    kind: ScheduleErrorKind::NonPositiveDeltaE,
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// StateVector
// ---------------------------------------------------------------------------

/// Unnormalized complex coefficients c_n in the eigenbasis of the unmeasured
/// Hamiltonian, tagged with the current time.
///
/// Amplitudes are never renormalized during evolution: the measured flow is
/// norm-decreasing by construction, and the relative damping between levels
/// is the physics. Normalization happens only in
/// [`crate::propagator::probabilities`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidParameter(
                "state vector must have at least one amplitude".into(),
            ));
        }
        if amplitudes
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
            || !time.is_finite()
        {
            return Err(Error::InvalidParameter(
                "state vector amplitudes and time must be finite".into(),
            ));
        }
        let sv = StateVector { amplitudes, time };
        sv.check_norm()?;
        Ok(sv)
    }

    /// State fully in the first level at t = 0.
    ///
    /// Panics if `levels` is zero.
    pub fn ground(levels: usize) -> Self {
        assert!(levels > 0, "state needs at least one level");
        let mut amplitudes = vec![Complex64::ZERO; levels];
        amplitudes[0] = Complex64::ONE;
        StateVector {
            amplitudes,
            time: 0.0,
        }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn levels(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Error if the squared norm has underflowed below [`NORM_UNDERFLOW`].
    pub fn check_norm(&self) -> Result<()> {
        let n = self.norm_sq();
        if !(n >= NORM_UNDERFLOW) {
            return Err(Error::NormUnderflow {
                time: self.time,
                norm_sq: n,
            });
        }
        Ok(())
    }

    /// Same amplitudes re-tagged to `time` (used to land segment boundaries
    /// exactly).
    pub fn at_time(&self, time: f64) -> Self {
        StateVector {
            amplitudes: self.amplitudes.clone(),
            time,
        }
    }

    pub(crate) fn from_parts(amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        let sv = StateVector { amplitudes, time };
        sv.check_norm()?;
        Ok(sv)
    }
}

// ---------------------------------------------------------------------------
// RegimeParams
// ---------------------------------------------------------------------------

/// Damping regime of the measured, driven two-level system, set by the sign
/// of Re(w^2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Underdamped => "underdamped",
            Regime::Critical => "critical",
            Regime::Overdamped => "overdamped",
        })
    }
}

/// Derived rates classifying a measured, driven two-level configuration.
///
/// With drive amplitude V0, level energies E1, E2, record E, error dE and
/// total measurement time tau:
///
/// - `coupling`   p = V0 / hbar
/// - `damping`    Omega = [(E2-E)^2 - (E1-E)^2] / (2 tau dE^2), 0 if unmeasured
/// - `mean_decay` gamma_bar = [(E1-E)^2 + (E2-E)^2] / (2 tau dE^2)
/// - `q`          [omega - (E2-E1)/hbar]/2 + i*Omega
/// - `w`          sqrt(q^2 + p^2)
///
/// On resonance with E = E1 these reduce to q = i*Omega and w^2 = p^2 -
/// Omega^2: real and positive in the underdamped (Rabi-like) regime, negative
/// in the overdamped (Zeno-inhibited) regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    pub coupling: f64,
    pub damping: f64,
    pub mean_decay: f64,
    pub q: Complex64,
    pub w: Complex64,
    pub regime: Regime,
}

impl RegimeParams {
    /// Rates for the given two-level configuration. The segment supplies the
    /// record (E, dE); `tau` is the governing total measurement time.
    pub fn compute(
        system: &SystemSpec,
        drive: &DriveSpec,
        segment: &MeterSegment,
        tau: f64,
    ) -> Result<Self> {
        let (e1, e2) = system.two_level_energies()?;
        let hbar = system.hbar();
        let (v0, omega) = match drive {
            DriveSpec::None => (0.0, 0.0),
            DriveSpec::ResonantTwoLevel { v0, omega, .. } => (*v0, *omega),
            DriveSpec::GeneralMatrix(_) => {
                return Err(Error::InvalidDrive(
                    "regime parameters are defined for two-level rotating drives only".into(),
                ))
            }
        };
        if segment.is_measured() && !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive for a measured segment, got {tau}"
            )));
        }

        let gamma1 = segment.damping_rate(e1, tau);
        let gamma2 = segment.damping_rate(e2, tau);
        let coupling = v0 / hbar;
        let damping = (gamma2 - gamma1) / 2.0;
        let mean_decay = (gamma1 + gamma2) / 2.0;
        let q = Complex64::new((omega - (e2 - e1) / hbar) / 2.0, damping);
        let w = (q * q + coupling * coupling).sqrt();
        let regime = classify(q * q + coupling * coupling, coupling);
        Ok(RegimeParams {
            coupling,
            damping,
            mean_decay,
            q,
            w,
            regime,
        })
    }

    /// w^2 recomputed from q and the coupling (identical complex arithmetic
    /// to the stored `w`).
    pub fn w_squared(&self) -> Complex64 {
        self.q * self.q + self.coupling * self.coupling
    }

    /// Per-level damping rates (gamma_1, gamma_2).
    pub fn level_decays(&self) -> (f64, f64) {
        (
            self.mean_decay - self.damping,
            self.mean_decay + self.damping,
        )
    }
}

/// Regime classification with tolerance 1e-12 * p^2, which makes critical
/// damping reachable in floating point (w = 0 is a measure-zero set).
fn classify(w_sq: Complex64, coupling: f64) -> Regime {
    let tol = 1e-12 * coupling * coupling;
    if w_sq.re > tol {
        Regime::Underdamped
    } else if w_sq.re < -tol {
        Regime::Overdamped
    } else {
        Regime::Critical
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_level() -> SystemSpec {
        SystemSpec::two_level(0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn system_validation() {
        assert!(SystemSpec::new(vec![0.0], 1.0).is_err());
        assert!(SystemSpec::new(vec![0.0, f64::NAN], 1.0).is_err());
        assert!(SystemSpec::new(vec![0.0, 1.0], 0.0).is_err());
        assert!(SystemSpec::new(vec![0.0, 1.0], -1.0).is_err());
        // duplicate energies are fine; levels are positional
        let s = SystemSpec::new(vec![1.0, 1.0, 0.5], 2.0).unwrap();
        assert_eq!(s.levels(), 3);
        assert_eq!(s.energy(1), 1.0);
    }

    #[test]
    fn drive_validation() {
        assert!(DriveSpec::resonant_two_level(-1.0, 1.0, 0.0).is_err());
        assert!(DriveSpec::resonant_two_level(1.0, f64::INFINITY, 0.0).is_err());
        let d = DriveSpec::resonant_two_level(2.0, 1.0, 0.5).unwrap();
        let m = d.matrix_at(0.5, 2).unwrap();
        // at t = t0 the off-diagonal is real v0
        assert!((m[1] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((m[2] - m[1].conj()).norm() == 0.0);
        assert!(d.matrix_at(0.0, 3).is_err());
    }

    #[test]
    fn general_drive_hermiticity_is_checked_per_sample() {
        let good = DriveSpec::general_matrix(2, |t| {
            vec![
                Complex64::ZERO,
                Complex64::new(t.cos(), t.sin()),
                Complex64::new(t.cos(), -t.sin()),
                Complex64::ZERO,
            ]
        })
        .unwrap();
        assert!(good.matrix_at(0.7, 2).is_ok());

        let bad = DriveSpec::general_matrix(2, |_| {
            vec![
                Complex64::ZERO,
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 1e-6),
                Complex64::ZERO,
            ]
        })
        .unwrap();
        match bad.matrix_at(0.3, 2) {
            Err(Error::NonHermitianDrive { time, .. }) => assert_eq!(time, 0.3),
            other => panic!("expected NonHermitianDrive, got {other:?}"),
        }

        // non-real diagonal is caught too
        let bad_diag = DriveSpec::general_matrix(2, |_| {
            vec![
                Complex64::new(0.0, 1e-3),
                Complex64::ZERO,
                Complex64::ZERO,
                Complex64::ZERO,
            ]
        })
        .unwrap();
        assert!(matches!(
            bad_diag.matrix_at(0.0, 2),
            Err(Error::NonHermitianDrive { .. })
        ));
    }

    #[test]
    fn single_segment_schedule_is_valid() {
        let seg = MeterSegment::measured(0.0, 2.0 * PI, 0.0, 0.1).unwrap();
        let sched = MeasurementSchedule::new(vec![seg]).unwrap();
        assert_eq!(sched.segments().len(), 1);
        assert!((sched.tau_total_measurement() - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn gap_reported_with_segment_index() {
        let segs = vec![
            MeterSegment::measured(0.0, 1.0, 0.0, 0.1).unwrap(),
            MeterSegment::measured(1.5, 2.0, 0.0, 0.1).unwrap(),
        ];
        match MeasurementSchedule::new(segs) {
            Err(Error::Schedule { index, kind }) => {
                assert_eq!(index, 1);
                assert_eq!(kind, ScheduleErrorKind::Gap);
            }
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn overlap_reported_with_segment_index() {
        let segs = vec![
            MeterSegment::measured(0.0, 1.0, 0.0, 0.1).unwrap(),
            MeterSegment::measured(0.9, 2.0, 0.0, 0.1).unwrap(),
        ];
        match MeasurementSchedule::new(segs) {
            Err(Error::Schedule { index, kind }) => {
                assert_eq!(index, 1);
                assert_eq!(kind, ScheduleErrorKind::Overlap);
            }
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn start_offset_rejected() {
        let segs = vec![MeterSegment::measured(0.5, 1.0, 0.0, 0.1).unwrap()];
        assert!(matches!(
            MeasurementSchedule::new(segs),
            Err(Error::Schedule {
                index: 0,
                kind: ScheduleErrorKind::DoesNotStartAtZero
            })
        ));
    }

    #[test]
    fn tau_is_sum_of_measured_durations() {
        let segs = vec![
            MeterSegment::measured(0.0, 0.01, 0.0, 0.1).unwrap(),
            MeterSegment::unmeasured(0.01, 1.0).unwrap(),
        ];
        let sched = MeasurementSchedule::new(segs).unwrap();
        assert!((sched.tau_total_measurement() - 0.01).abs() < 1e-15);
        assert!((sched.total_time() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn segment_constructor_rejects_bad_inputs() {
        assert!(MeterSegment::measured(0.0, 0.0, 0.0, 0.1).is_err());
        assert!(MeterSegment::measured(1.0, 0.5, 0.0, 0.1).is_err());
        assert!(MeterSegment::measured(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(MeterSegment::measured(0.0, 1.0, 0.0, -0.1).is_err());
        assert!(MeterSegment::measured(0.0, 1.0, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn state_vector_norm_floor() {
        let tiny = Complex64::new(1e-160, 0.0);
        assert!(StateVector::new(vec![tiny, tiny], 0.0).is_err());
        let sv = StateVector::ground(3);
        assert_eq!(sv.levels(), 3);
        assert_eq!(sv.norm_sq(), 1.0);
        assert!(sv.check_norm().is_ok());
    }

    #[test]
    fn regime_params_pure_rabi() {
        // E2-E1 = 1, V0 = 1, hbar = 1, resonant, unmeasured: p = 1, q = 0,
        // w = 1, underdamped.
        let sys = two_level();
        let drive = DriveSpec::resonant_two_level(1.0, 1.0, 0.0).unwrap();
        let seg = MeterSegment::unmeasured(0.0, 1.0).unwrap();
        let p = RegimeParams::compute(&sys, &drive, &seg, 1.0).unwrap();
        assert_eq!(p.coupling, 1.0);
        assert_eq!(p.damping, 0.0);
        assert_eq!(p.mean_decay, 0.0);
        assert_eq!(p.q, Complex64::ZERO);
        assert!((p.w - Complex64::ONE).norm() < 1e-15);
        assert_eq!(p.regime, Regime::Underdamped);
    }

    #[test]
    fn regime_params_critical_and_overdamped() {
        let sys = two_level();
        let drive = DriveSpec::resonant_two_level(1.0, 1.0, 0.0).unwrap();
        // Omega = (E2-E1)^2/(2 tau dE^2) = 1 when tau * dE^2 = 1/2
        let seg = MeterSegment::measured(0.0, 1.0, 0.0, f64::sqrt(0.5)).unwrap();
        let p = RegimeParams::compute(&sys, &drive, &seg, 1.0).unwrap();
        assert!((p.damping - 1.0).abs() < 1e-12);
        assert!((p.q - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        assert!(p.w.norm() < 2e-6); // w^2 = p^2 - Omega^2 = 0
        assert_eq!(p.regime, Regime::Critical);

        // Omega = 2 via tau * dE^2 = 1/4: w^2 = 1 - 4 = -3
        let seg = MeterSegment::measured(0.0, 1.0, 0.0, 0.5).unwrap();
        let p = RegimeParams::compute(&sys, &drive, &seg, 1.0).unwrap();
        assert!((p.damping - 2.0).abs() < 1e-12);
        assert!((p.w_squared().re + 3.0).abs() < 1e-12);
        assert_eq!(p.regime, Regime::Overdamped);
        // w = sqrt(q^2 + p^2) exactly as complex arithmetic
        let w2 = p.w * p.w;
        assert!((w2 - p.w_squared()).norm() < 1e-14);
    }

    #[test]
    fn unmeasured_damping_is_exactly_zero() {
        let sys = two_level();
        let drive = DriveSpec::resonant_two_level(1.0, 1.0, 0.0).unwrap();
        let seg = MeterSegment::unmeasured(0.0, 5.0).unwrap();
        let p = RegimeParams::compute(&sys, &drive, &seg, 5.0).unwrap();
        assert_eq!(p.damping, 0.0);
        assert_eq!(p.mean_decay, 0.0);
        assert_eq!(p.q.im, 0.0);
    }

    #[test]
    fn regime_params_requires_two_levels() {
        let sys = SystemSpec::with_unit_hbar(vec![0.0, 1.0, 2.0]).unwrap();
        let drive = DriveSpec::none();
        let seg = MeterSegment::unmeasured(0.0, 1.0).unwrap();
        assert!(RegimeParams::compute(&sys, &drive, &seg, 1.0).is_err());
    }

    #[test]
    fn values_are_share_and_send() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<SystemSpec>();
        assert_send_sync::<DriveSpec>();
        assert_send_sync::<MeterSegment>();
        assert_send_sync::<MeasurementSchedule>();
        assert_send_sync::<StateVector>();
        assert_send_sync::<RegimeParams>();
    }

    #[test]
    fn classification_tolerance_band() {
        let c = 1.0;
        assert_eq!(classify(Complex64::new(1e-13, 0.0), c), Regime::Critical);
        assert_eq!(classify(Complex64::new(-1e-13, 0.0), c), Regime::Critical);
        assert_eq!(classify(Complex64::new(1e-11, 0.0), c), Regime::Underdamped);
        assert_eq!(classify(Complex64::new(-1e-11, 0.0), c), Regime::Overdamped);
    }
}
