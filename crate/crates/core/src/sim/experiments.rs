//! Replica experiments: exit laws of valleys, projected metastate paths and
//! empirical inter-well rates.
//!
//! Replica `i` draws from stream `i` of the run seed and replicas are merged
//! in index order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ks::{ks_exponential_test, KsResult};
use super::path::{sample_path, PathSample, SimTime, Stop};
use crate::chain::{Chain, StateSet};
use crate::error::{Error, Result};
use crate::meta::{ResolvedPartition, ResolvedValley};
use crate::trace::extract_trace_path;

pub const MIN_EXIT_REPLICAS: usize = 1000;

/// Aggregated outcome of repeated basin exits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitLawStats {
    pub reps: usize,
    pub seed: u64,
    pub start: String,
    pub theta: f64,
    /// Fraction of replicas that visit the attractor before leaving the basin.
    pub attractor_first_frequency: f64,
    /// Exit times divided by θ, in replica order.
    pub normalized_exit_times: Vec<f64>,
    pub mean_normalized_exit_time: f64,
    pub ks: KsResult,
    /// Mean and max over replicas of the annulus occupation before exit, divided by θ.
    pub mean_annulus_occupation: f64,
    pub max_annulus_occupation: f64,
}

/// Simulates `reps` exits from the basin starting at `start` (the attractor by default).
pub fn exit_law_experiment(
    chain: &Chain,
    valley: &ResolvedValley,
    theta: f64,
    reps: usize,
    seed: u64,
    start: Option<usize>,
) -> Result<ExitLawStats> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidInput("theta must be positive".into()));
    }
    if reps < MIN_EXIT_REPLICAS {
        return Err(Error::TooFewSamples {
            needed: MIN_EXIT_REPLICAS,
            got: reps,
        });
    }
    let start = start.unwrap_or(valley.attractor);
    if !valley.basin.contains(start) {
        return Err(Error::InvalidInput(format!(
            "start `{}` lies outside the basin",
            chain.label(start)
        )));
    }
    let stop = Stop::target(valley.exterior.clone());
    let xi = StateSet::singleton(valley.attractor);
    let records: Vec<(bool, f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(chain, start, &stop, seed, i)?;
            let first = path.hitting_time(&xi).is_some();
            let exit = path.horizon.as_secs() / theta;
            let annulus = path.occupation(&valley.annulus).as_secs() / theta;
            Ok((first, exit, annulus))
        })
        .collect::<Result<_>>()?;

    let n = reps as f64;
    let hits = records.iter().filter(|r| r.0).count();
    let normalized_exit_times: Vec<f64> = records.iter().map(|r| r.1).collect();
    let ks = ks_exponential_test(&normalized_exit_times)?;
    Ok(ExitLawStats {
        reps,
        seed,
        start: chain.label(start).to_string(),
        theta,
        attractor_first_frequency: hits as f64 / n,
        mean_normalized_exit_time: normalized_exit_times.iter().sum::<f64>() / n,
        normalized_exit_times,
        ks,
        mean_annulus_occupation: records.iter().map(|r| r.2).sum::<f64>() / n,
        max_annulus_occupation: records.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// How instants spent in the annulus are labelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    /// Annulus excursions are cut out (trace on the union of the wells).
    Trace,
    /// Annulus instants carry the label of the last visited well.
    LastVisit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaSegment {
    /// Zero-based well index.
    pub well: usize,
    pub duration: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectedPath {
    pub variant: Projection,
    pub segments: Vec<MetaSegment>,
    /// Set when a leading annulus excursion was removed (trace variant).
    pub dropped_prefix: bool,
}

impl ProjectedPath {
    pub fn duration(&self) -> SimTime {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Successive well-to-well jumps.
    pub fn jumps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.segments.windows(2).map(|w| (w[0].well, w[1].well))
    }
}

fn push_merged(segments: &mut Vec<MetaSegment>, well: usize, duration: SimTime) {
    match segments.last_mut() {
        Some(last) if last.well == well => last.duration += duration,
        _ => segments.push(MetaSegment { well, duration }),
    }
}

/// Maps a path to well labels.
pub fn project_path(path: &PathSample, partition: &ResolvedPartition, variant: Projection) -> Result<ProjectedPath> {
    let mut segments = Vec::new();
    match variant {
        Projection::Trace => {
            let trace = extract_trace_path(path, &partition.metastates)?;
            for seg in &trace.path.segments {
                let well = partition.assignment[seg.state].expect("trace stays in the wells");
                push_merged(&mut segments, well, seg.duration);
            }
            Ok(ProjectedPath {
                variant,
                segments,
                dropped_prefix: trace.dropped_prefix,
            })
        }
        Projection::LastVisit => {
            let Some(mut current) = partition.assignment.get(path.start).copied().flatten() else {
                return Err(Error::StartsInAnnulus(format!("state index {}", path.start)));
            };
            for seg in &path.segments {
                if let Some(w) = partition.assignment[seg.state] {
                    current = w;
                }
                push_merged(&mut segments, current, seg.duration);
            }
            Ok(ProjectedPath {
                variant,
                segments,
                dropped_prefix: false,
            })
        }
    }
}

/// Maximum-likelihood rates of the projected, time-rescaled process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRateEstimate {
    pub theta: f64,
    pub horizon: f64,
    pub reps: usize,
    pub seed: u64,
    /// `jump_counts[x][y]`: observed jumps from well x to well y.
    pub jump_counts: Vec<Vec<u64>>,
    /// Rescaled time spent in each well.
    pub occupation: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
}

/// Runs `reps` replicas of length `horizon`, replica `i` starting at the
/// attractor of well `i mod κ`, and estimates `r̂(x,y) = n_xy / T_x` from the
/// trace projection with time divided by `theta`.
pub fn empirical_meta_rates(
    chain: &Chain,
    partition: &ResolvedPartition,
    theta: f64,
    horizon: f64,
    reps: usize,
    seed: u64,
) -> Result<MetaRateEstimate> {
    if !(theta > 0.0) || !(horizon > 0.0) || reps == 0 {
        return Err(Error::InvalidInput("theta, horizon and reps must be positive".into()));
    }
    let k = partition.wells.len();
    let stop = Stop::horizon(horizon);
    let per_replica: Vec<(Vec<u64>, Vec<SimTime>)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let start = partition.attractors[i as usize % k];
            let path = sample_path(chain, start, &stop, seed, i)?;
            let projected = project_path(&path, partition, Projection::Trace)?;
            let mut counts = vec![0u64; k * k];
            let mut times = vec![SimTime::ZERO; k];
            for (x, y) in projected.jumps() {
                counts[x * k + y] += 1;
            }
            for seg in &projected.segments {
                times[seg.well] += seg.duration;
            }
            Ok((counts, times))
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![0u64; k * k];
    let mut times = vec![SimTime::ZERO; k];
    for (c, t) in &per_replica {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        for (a, b) in times.iter_mut().zip(t) {
            *a += *b;
        }
    }
    let occupation: Vec<f64> = times.iter().map(|t| t.as_secs() / theta).collect();
    let mut rates = vec![vec![0.0; k]; k];
    let mut std_errors = vec![vec![0.0; k]; k];
    for x in 0..k {
        for y in 0..k {
            let n = counts[x * k + y] as f64;
            if x != y && occupation[x] > 0.0 {
                rates[x][y] = n / occupation[x];
                std_errors[x][y] = n.sqrt() / occupation[x];
            }
        }
    }
    Ok(MetaRateEstimate {
        theta,
        horizon,
        reps,
        seed,
        jump_counts: counts.chunks(k).map(<[u64]>::to_vec).collect(),
        occupation,
        rates,
        std_errors,
    })
}
