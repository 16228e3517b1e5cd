//! Trace processes, potential theory and metastability analysis for finite
//! continuous-time Markov chains indexed by a scaling parameter N.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod error;
pub mod fit;
pub mod io;
mod linalg;
pub mod meta;
pub mod potential;
pub mod sim;
pub mod trace;
pub mod verify;

pub use chain::{
    escape_probability, expected_additive_until_hitting, expected_additive_until_hitting_all, hitting_probability,
    stationary_measure, stationary_measure_with, transient_functional, Chain, ChainSpec, StateSet, StationaryMeasure,
    Tolerances,
};
pub use error::{Error, Result};
pub use fit::{default_grid, scale_fit, Assessment, ScaleFit, Verdict};
pub use meta::{
    check_valley_conditions, tunneling_analysis, valley_depth, ChainFamily, ConditionMode, MetaPartition,
    ResolvedPartition, ResolvedValley, SetSelector, TimeScale, TunnelingReport, ValleyReport, ValleySpec,
};
pub use potential::{capacity, capacity_value, dirichlet_form, equilibrium_potential, mean_set_rate, point_capacity};
pub use trace::{trace_by_elimination, trace_by_hitting, trace_stationary, TraceChain};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
