//! Simulation of quantum systems under continuous or pulsed energy
//! measurement.
//!
//! A selective energy measurement with result E, instrumental error dE and
//! total duration tau acts on the measured system like a non-Hermitian
//! effective Hamiltonian: on top of its phase rotation, each eigenlevel n of
//! the unmeasured system is damped at the rate (E_n - E)^2 / (tau dE^2), so
//! the unnormalized state collapses around the record and its squared norm
//! tracks the record's probability. Adding a resonant drive turns this into
//! a competition between Rabi transfer and measurement back-action: accurate
//! meters (dE below a critical error) freeze the transitions (the quantum
//! Zeno effect), while coarse meters leave the oscillation intact.
//!
//! The crate provides:
//!
//! - [`types`]: system/drive/record/state domain types and validation;
//! - [`closed_form`]: exact two-level solutions, the survival probability,
//!   and the critical measurement error;
//! - [`propagator`]: fixed-step RK4 for any level count and drive, the
//!   numeric counterpart checked against the closed forms;
//! - [`schedules`]: continuous, pulsed, and stroboscopic (QND) measurement
//!   strategies plus chained propagation across a schedule;
//! - [`experiments`]: parameter sweeps producing tabular data;
//! - [`cli`]: the `zenosim` command-line front end.
//!
//! ```
//! use zenosim::closed_form::critical_error;
//! use zenosim::propagator::probabilities;
//! use zenosim::schedules::{continuous, run_schedule, RunOptions};
//! use zenosim::{DeltaE, DriveSpec, StateVector, SystemSpec};
//!
//! // resonantly driven two-level system, natural units
//! let system = SystemSpec::two_level(0.0, 1.0, 1.0)?;
//! let drive = DriveSpec::resonant_for(&system, 1.0)?;
//! let t_pi = std::f64::consts::PI / 2.0; // full transfer when unmeasured
//!
//! let transfer = |delta_e: DeltaE| -> zenosim::Result<f64> {
//!     let schedule = continuous(t_pi, 0.0, delta_e)?;
//!     let start = StateVector::ground(2);
//!     let traj = run_schedule(&start, &system, &drive, &schedule, &RunOptions::default())?;
//!     Ok(probabilities(traj.final_state())?[1])
//! };
//!
//! let free = transfer(DeltaE::Unmeasured)?;
//! assert!((free - 1.0).abs() < 1e-12);
//!
//! // an accurate meter watching the energy freezes the transition
//! let de_crit = critical_error(&system, &drive, t_pi)?;
//! let watched = transfer(DeltaE::Finite(0.05 * de_crit))?;
//! assert!(watched < 0.01);
//! # Ok::<(), zenosim::Error>(())
//! ```

// `!(x > 0.0)`-style guards are deliberate throughout: unlike `x <= 0.0`
// they also reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod experiments;
pub mod propagator;
pub mod schedules;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    DeltaE, DriveSpec, MeasurementSchedule, MeterSegment, Regime, RegimeParams, StateVector,
    SystemSpec,
};
