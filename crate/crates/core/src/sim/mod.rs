//! Monte Carlo simulation of chain trajectories.

mod experiments;
mod ks;
mod path;

pub use experiments::{
    empirical_meta_rates, exit_law_experiment, project_path, ExitLawStats, MetaRateEstimate, MetaSegment,
    ProjectedPath, Projection, MIN_EXIT_REPLICAS,
};
pub use ks::{ks_exponential_test, KsResult, KS_MIN_SAMPLES};
pub use path::{replica_rng, sample_path, sample_path_with, PathSample, Segment, SimTime, Stop, StopReason};
