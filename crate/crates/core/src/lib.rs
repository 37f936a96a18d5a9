//! Content-oblivious cache partitioning for shared caches.
//!
//! A cache operator splits `K` storage slots among `P` content providers
//! while observing only per-provider aggregate miss rates. Each time slot
//! the algorithm deploys two integer test allocations built from a
//! zero-sum perturbation of its real-valued state, measures both halves,
//! and takes a projected subgradient step scaled by a configurable
//! step-size schedule.
//!
//! - [`allocation`]: state types and the pure per-iteration operations.
//! - [`schedule`]: reciprocal, moderate and conditional step sequences.
//! - [`workload`]: Zipf sub-catalogs, Poisson arrivals, ON/OFF churn.
//! - [`oracle`]: exact baselines and the allocation error metric.
//! - [`engine`]: the slotted simulation loop, traces, replications.

use std::fmt;

pub mod allocation;
pub mod engine;
pub mod oracle;
pub mod schedule;
pub mod workload;

pub use allocation::{
    center_point, compute_update, make_test_allocations, project_simplex, sample_perturbation,
    sdcp_step, IntegerAllocation, MeasuredMissPair, PerturbationVector, UpdateVector,
    VirtualAllocation, FEASIBILITY_TOL,
};
pub use engine::{
    run_baseline, run_baseline_replications, run_experiment, run_replications, stationary_curves,
    Aggregate, ExperimentConfig, InitialAllocation, SlotRecord, Trace, TraceSummary,
};
pub use oracle::{
    brute_force_optimal, error_metric, greedy_optimal, interpolant_minimizer, uniform_allocation,
    MissCurveSet,
};
pub use schedule::{init_from_first_update, ScheduleConfig, ScheduleKind, ScheduleState};
pub use workload::{
    advance_catalog, measure_miss_counts, measure_miss_rates, miss_intensity, rebalance_rates,
    zipf_popularity, CpWorkload, OnOffModel, Popularity, SlotMeasurement,
};

/// Errors reported by configuration validation and library operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An argument violates a documented precondition.
    InvalidArgument(String),
    /// An exhaustive computation would exceed its safety bound.
    InstanceTooLarge(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InstanceTooLarge(msg) => write!(f, "instance too large: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
