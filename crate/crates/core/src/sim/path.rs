//! Simulated trajectories with exact time bookkeeping.
//!
//! Durations are stored as integer ticks of 2⁻⁶⁴ time units, so sums of
//! durations (occupation times, trace durations) are exact and independent
//! of summation order.

use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Chain, StateSet};
use crate::error::{Error, Result};

const TICKS_PER_UNIT: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// A nonnegative duration in ticks of 2⁻⁶⁴ time units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u128);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    /// Rounds a nonnegative duration to the tick grid; positive durations
    /// occupy at least one tick.
    pub fn from_secs(d: f64) -> SimTime {
        if !(d > 0.0) {
            return SimTime::ZERO;
        }
        let ticks = (d * TICKS_PER_UNIT).round();
        SimTime((ticks as u128).max(1))
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT
    }

    pub fn ticks(self) -> u128 {
        self.0
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Sum for SimTime {
    fn sum<I: Iterator<Item = SimTime>>(iter: I) -> SimTime {
        iter.fold(SimTime::ZERO, Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub state: usize,
    pub duration: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    HitTarget,
    Horizon,
    Absorbed,
}

/// One trajectory. The segments cover `[0, horizon)`; on `HitTarget` the
/// path enters `end_state` at time `horizon`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSample {
    pub start: usize,
    pub segments: Vec<Segment>,
    pub horizon: SimTime,
    pub stop_reason: StopReason,
    pub end_state: usize,
}

impl PathSample {
    /// Total time spent in `set`.
    pub fn occupation(&self, set: &StateSet) -> SimTime {
        self.segments
            .iter()
            .filter(|s| set.contains(s.state))
            .map(|s| s.duration)
            .sum()
    }

    /// Entry times of successive states: `(time, state)`, including the
    /// terminal entry on `HitTarget`.
    fn entries(&self) -> impl Iterator<Item = (SimTime, usize)> + '_ {
        let mut t = SimTime::ZERO;
        let tail = (self.stop_reason == StopReason::HitTarget).then_some((self.horizon, self.end_state));
        self.segments
            .iter()
            .map(move |s| {
                let entry = (t, s.state);
                t += s.duration;
                entry
            })
            .chain(tail)
    }

    /// `T_A = inf{t ≥ 0 : η_t ∈ A}` if observed.
    pub fn hitting_time(&self, set: &StateSet) -> Option<SimTime> {
        self.entries().find(|&(_, s)| set.contains(s)).map(|(t, _)| t)
    }

    /// `T⁺_A`: first entry into `A` after the first jump.
    pub fn return_time(&self, set: &StateSet) -> Option<SimTime> {
        self.entries().skip(1).find(|&(_, s)| set.contains(s)).map(|(t, _)| t)
    }

    /// `T_B(A)`: time spent in `a` before hitting `b` (whole path if `b` is
    /// never hit).
    pub fn occupation_before(&self, a: &StateSet, b: &StateSet) -> SimTime {
        let mut total = SimTime::ZERO;
        for s in &self.segments {
            if b.contains(s.state) {
                break;
            }
            if a.contains(s.state) {
                total += s.duration;
            }
        }
        total
    }

    /// Time change `S^A_t = sup{s : 𝒯^A_s ≤ t}` for a trace clock reading `t`.
    pub fn time_change(&self, set: &StateSet, t: SimTime) -> SimTime {
        let mut clock = SimTime::ZERO;
        let mut real = SimTime::ZERO;
        for s in &self.segments {
            if set.contains(s.state) {
                if clock + s.duration > t {
                    return real + (t - clock);
                }
                clock += s.duration;
            }
            real += s.duration;
        }
        real
    }
}

/// Stopping rule; at least one of the two must be set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stop {
    pub target: Option<StateSet>,
    pub horizon: Option<f64>,
}

impl Stop {
    pub fn target(set: StateSet) -> Stop {
        Stop {
            target: Some(set),
            horizon: None,
        }
    }

    pub fn horizon(t: f64) -> Stop {
        Stop {
            target: None,
            horizon: Some(t),
        }
    }
}

/// ChaCha20 generator for replica `stream` of run `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF exponential draw with rate `rate`.
fn exponential<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Simulates from `start` until `stop`, using replica stream `stream` of `seed`.
pub fn sample_path(chain: &Chain, start: usize, stop: &Stop, seed: u64, stream: u64) -> Result<PathSample> {
    let mut rng = replica_rng(seed, stream);
    sample_path_with(chain, start, stop, &mut rng)
}

/// Jump-chain construction: hold for an exponential time of rate λ(η), then
/// move according to p(η, ·).
pub fn sample_path_with<R: Rng>(chain: &Chain, start: usize, stop: &Stop, rng: &mut R) -> Result<PathSample> {
    if start >= chain.len() {
        return Err(Error::InvalidInput(format!("start index {start} out of range")));
    }
    let horizon = match stop.horizon {
        Some(h) if !(h > 0.0) || !h.is_finite() => {
            return Err(Error::InvalidInput("horizon must be positive and finite".into()))
        }
        Some(h) => Some(SimTime::from_secs(h)),
        None => None,
    };
    let target = match &stop.target {
        Some(t) if t.is_empty() => return Err(Error::EmptySupport),
        Some(t) => Some(t),
        None => None,
    };
    if target.is_none() && horizon.is_none() {
        return Err(Error::InvalidInput("a target set or a horizon is required".into()));
    }
    // without a horizon, entering a state that cannot reach the target never ends
    let reachable = match (target, horizon) {
        (Some(t), None) if !chain.is_irreducible() => Some(chain.can_reach(t)),
        _ => None,
    };

    let mut segments = Vec::new();
    let mut elapsed = SimTime::ZERO;
    let mut state = start;
    loop {
        if target.is_some_and(|t| t.contains(state)) {
            return Ok(PathSample {
                start,
                segments,
                horizon: elapsed,
                stop_reason: StopReason::HitTarget,
                end_state: state,
            });
        }
        if reachable.as_ref().is_some_and(|r| !r[state]) {
            return Err(Error::AbsorbedBeforeTarget(chain.label(state).to_string()));
        }
        let lambda = chain.holding(state);
        if lambda <= 0.0 {
            let Some(h) = horizon else {
                return Err(Error::AbsorbedBeforeTarget(chain.label(state).to_string()));
            };
            segments.push(Segment {
                state,
                duration: h - elapsed,
            });
            return Ok(PathSample {
                start,
                segments,
                horizon: h,
                stop_reason: StopReason::Absorbed,
                end_state: state,
            });
        }
        let hold = SimTime::from_secs(exponential(rng, lambda));
        if let Some(h) = horizon {
            if elapsed + hold >= h {
                segments.push(Segment {
                    state,
                    duration: h - elapsed,
                });
                return Ok(PathSample {
                    start,
                    segments,
                    horizon: h,
                    stop_reason: StopReason::Horizon,
                    end_state: state,
                });
            }
        }
        segments.push(Segment { state, duration: hold });
        elapsed += hold;

        let mut u = rng.random::<f64>() * lambda;
        let row = chain.out_rates(state);
        let mut next = row[row.len() - 1].0;
        for &(j, r) in row {
            if u < r {
                next = j;
                break;
            }
            u -= r;
        }
        state = next;
    }
}
