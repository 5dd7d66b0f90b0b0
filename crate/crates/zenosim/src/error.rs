//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid drive: {0}")]
    InvalidDrive(String),

    /// The sampled drive matrix failed the Hermiticity check.
    #[error("drive matrix is not Hermitian at t = {time}: max deviation {deviation:e} (relative tolerance 1e-12)")]
    NonHermitianDrive { time: f64, deviation: f64 },

    /// A measurement schedule violated one of its structural invariants.
    /// `index` is the offending segment.
    #[error("schedule segment {index}: {kind}")]
    Schedule {
        index: usize,
        kind: ScheduleErrorKind,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Total squared norm dropped below the representable floor (1e-300);
    /// the trajectory has left double precision.
    #[error("state norm underflow at t = {time}: |psi|^2 = {norm_sq:e}")]
    NormUnderflow { time: f64, norm_sq: f64 },

    #[error("segment would take {required} steps but max_steps = {max}")]
    MaxStepsExceeded { required: u64, max: u64 },

    /// The norm grew across an integration step. The measured flow never
    /// increases the norm, so growth means the step is outside the
    /// integrator's stability region for the problem's rates.
    #[error("integration unstable at t = {time}: norm grew by a factor {growth} over one step of {step:e}; reduce the step")]
    UnstableStep { time: f64, step: f64, growth: f64 },

    /// Run-configuration file problem; the message carries the path to the
    /// offending key where one exists.
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to invalid
    /// inputs). The CLI maps these to a distinct exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NormUnderflow { .. } | Error::MaxStepsExceeded { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleErrorKind {
    /// Segment list is empty.
    Empty,
    /// First segment does not start at t = 0.
    DoesNotStartAtZero,
    /// Segment starts before the previous one ends.
    Overlap,
    /// Segment starts after the previous one ends.
    Gap,
    /// t_end <= t_start.
    NonPositiveDuration,
    /// Finite measurement error must be positive.
    NonPositiveDeltaE,
}

impl std::fmt::Display for ScheduleErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let msg = match self {
            ScheduleErrorKind::Empty => "schedule has no segments",
            ScheduleErrorKind::DoesNotStartAtZero => "first segment must start at t = 0",
            ScheduleErrorKind::Overlap => "segment overlaps the previous one",
            ScheduleErrorKind::Gap => "gap before segment",
            ScheduleErrorKind::NonPositiveDuration => "segment duration must be positive",
            ScheduleErrorKind::NonPositiveDeltaE => "finite measurement error must be positive",
        };
        f.write_str(msg)
    }
}
