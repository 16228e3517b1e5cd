//! Trace processes: the chain observed only while it sits in a subset F,
//! optionally with time weighted by a nonnegative function h supported on F.

use std::collections::BTreeMap;

use crate::chain::{solve_interior, Chain, StateSet, StationaryMeasure, Tolerances};
use crate::error::{Error, Result};
use crate::sim::{PathSample, Segment, SimTime};

/// Relative threshold under which trace rates are dropped.
const TRUNCATION: f64 = 1e-14;
/// Right-hand sides per batched solve.
const BATCH: usize = 256;

/// Sparse rows of trace rates in local (support) indices.
pub type TraceRates = Vec<Vec<(usize, f64)>>;

/// Trace (or h-trace) of a chain on its support F.
#[derive(Debug, Clone)]
pub struct TraceChain {
    support: StateSet,
    weights: Vec<f64>,
    local: Vec<Option<usize>>,
    chain: Chain,
}

impl TraceChain {
    fn new(base: &Chain, support: StateSet, weights: Vec<f64>, rows: TraceRates) -> TraceChain {
        let mut local = vec![None; base.len()];
        for (k, s) in support.iter().enumerate() {
            local[s] = Some(k);
        }
        let labels = support.iter().map(|s| base.label(s).to_string()).collect();
        let rows = rows
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().map(|&(_, r)| r).sum();
                row.into_iter().filter(|&(_, r)| r > TRUNCATION * total).collect()
            })
            .collect();
        TraceChain {
            support,
            weights,
            local,
            chain: Chain::from_rows(labels, rows),
        }
    }

    /// Support F in base-chain indices; local index k is the k-th element.
    pub fn support(&self) -> &StateSet {
        &self.support
    }

    /// h restricted to the support, in local order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The trace as a chain on local indices (labels inherited from the base).
    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn to_local(&self, base_state: usize) -> Option<usize> {
        self.local.get(base_state).copied().flatten()
    }

    pub fn to_base(&self, local_state: usize) -> usize {
        self.support.as_slice()[local_state]
    }

    /// Maps a base-index set into local indices; it must lie in the support.
    pub fn local_set(&self, set: &StateSet) -> Result<StateSet> {
        set.iter()
            .map(|s| {
                self.to_local(s)
                    .ok_or_else(|| Error::InvalidInput(format!("state index {s} is outside the trace support")))
            })
            .collect::<Result<Vec<_>>>()
            .map(StateSet::new)
    }

    /// Trace rate between two base states of the support.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        match (self.to_local(from), self.to_local(to)) {
            (Some(i), Some(j)) => self.chain.rate(i, j),
            _ => 0.0,
        }
    }
}

fn validate_support(chain: &Chain, f: &StateSet) -> Result<()> {
    if f.is_empty() {
        return Err(Error::EmptySupport);
    }
    if f.iter().any(|s| s >= chain.len()) {
        return Err(Error::InvalidInput("support index out of range".into()));
    }
    Ok(())
}

/// Untruncated `R^F` via first-entry distributions `P_ζ[T_F = T_ξ]` on `F^c`,
/// all targets sharing one factorization.
pub fn trace_rates_by_hitting(chain: &Chain, f: &StateSet) -> Result<TraceRates> {
    validate_support(chain, f)?;
    let n = chain.len();
    let outside = f.complement(n);
    let in_f = f.mask(n);
    let mut local = vec![usize::MAX; n];
    for (k, s) in f.iter().enumerate() {
        local[s] = k;
    }

    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); f.len()];
    for (k, s) in f.iter().enumerate() {
        for &(j, r) in chain.out_rates(s) {
            if in_f[j] {
                *rows[k].entry(local[j]).or_insert(0.0) += r;
            }
        }
    }

    if !outside.is_empty() {
        if !chain.is_irreducible() {
            return Err(Error::NotIrreducible(
                chain
                    .communicating_classes()
                    .into_iter()
                    .map(|c| c.into_iter().map(|s| chain.label(s).to_string()).collect())
                    .collect(),
            ));
        }
        // only targets entered directly from F^c carry a nonzero column
        let targets: Vec<usize> = StateSet::new(
            outside
                .iter()
                .flat_map(|z| chain.out_rates(z).iter().map(|&(j, _)| j))
                .filter(|&j| in_f[j]),
        )
        .iter()
        .collect();
        let feeders: Vec<(usize, usize)> = f
            .iter()
            .enumerate()
            .filter(|&(_, s)| chain.out_rates(s).iter().any(|&(j, _)| !in_f[j]))
            .collect();
        for chunk in targets.chunks(BATCH) {
            let rhs: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&xi| {
                    let mut b = vec![0.0; n];
                    for z in outside.iter() {
                        b[z] = chain.rate(z, xi);
                    }
                    b
                })
                .collect();
            let entry = solve_interior(chain, &outside, &rhs)?;
            for (&xi, u) in chunk.iter().zip(&entry) {
                for &(k, s) in &feeders {
                    if s == xi {
                        continue;
                    }
                    let extra: f64 = chain
                        .out_rates(s)
                        .iter()
                        .filter(|&&(j, _)| !in_f[j])
                        .map(|&(j, r)| r * u[j])
                        .sum();
                    if extra > 0.0 {
                        *rows[k].entry(local[xi]).or_insert(0.0) += extra;
                    }
                }
            }
        }
    }
    Ok(rows
        .into_iter()
        .map(|row| row.into_iter().filter(|&(_, r)| r > 0.0).collect())
        .collect())
}

/// Untruncated `R^F` by eliminating the states of `F^c` one at a time in
/// the given order (input order when `order` is `None`). Each step applies
/// `R(η,ξ) += R(η,ξ₀) p(ξ₀,ξ)` and discards the resulting self-loops.
pub fn trace_rates_by_elimination(chain: &Chain, f: &StateSet, order: Option<&[usize]>) -> Result<TraceRates> {
    validate_support(chain, f)?;
    let n = chain.len();
    let default_order: Vec<usize>;
    let order = match order {
        Some(o) => {
            let as_set = StateSet::new(o.iter().copied());
            if o.len() != n - f.len() || as_set != f.complement(n) {
                return Err(Error::InvalidInput(
                    "elimination order must enumerate the complement of F".into(),
                ));
            }
            o
        }
        None => {
            default_order = f.complement(n).iter().collect();
            &default_order
        }
    };

    let mut out: Vec<BTreeMap<usize, f64>> = (0..n).map(|i| chain.out_rates(i).iter().copied().collect()).collect();
    let mut inc: Vec<BTreeMap<usize, ()>> = vec![BTreeMap::new(); n];
    for (i, row) in out.iter().enumerate() {
        for &j in row.keys() {
            inc[j].insert(i, ());
        }
    }

    for &x0 in order {
        let row = std::mem::take(&mut out[x0]);
        let lambda: f64 = row.values().sum();
        for &j in row.keys() {
            inc[j].remove(&x0);
        }
        let sources: Vec<usize> = std::mem::take(&mut inc[x0]).into_keys().collect();
        if lambda <= 0.0 {
            if !sources.is_empty() {
                return Err(Error::ZeroHoldingRate(chain.label(x0).to_string()));
            }
            continue;
        }
        for eta in sources {
            let r = out[eta].remove(&x0).unwrap_or(0.0);
            for (&xi, &w) in &row {
                if xi == eta {
                    continue;
                }
                *out[eta].entry(xi).or_insert(0.0) += r * w / lambda;
                inc[xi].insert(eta, ());
            }
        }
    }

    let mut local = vec![usize::MAX; n];
    for (k, s) in f.iter().enumerate() {
        local[s] = k;
    }
    Ok(f.iter()
        .map(|s| {
            out[s]
                .iter()
                .filter(|&(_, &r)| r > 0.0)
                .map(|(&j, &r)| (local[j], r))
                .collect()
        })
        .collect())
}

pub fn trace_by_hitting(chain: &Chain, f: &StateSet) -> Result<TraceChain> {
    let rows = trace_rates_by_hitting(chain, f)?;
    Ok(TraceChain::new(chain, f.clone(), vec![1.0; f.len()], rows))
}

pub fn trace_by_elimination(chain: &Chain, f: &StateSet) -> Result<TraceChain> {
    trace_by_elimination_in_order(chain, f, None)
}

/// As [`trace_by_elimination`], eliminating `F^c` in the given order.
pub fn trace_by_elimination_in_order(chain: &Chain, f: &StateSet, order: Option<&[usize]>) -> Result<TraceChain> {
    let rows = trace_rates_by_elimination(chain, f, order)?;
    Ok(TraceChain::new(chain, f.clone(), vec![1.0; f.len()], rows))
}

/// h-trace: `R^h(η,ξ) = λ(η)/h(η) · P_η[T⁺_F = T⁺_ξ]` on the support F of h.
pub fn h_trace(chain: &Chain, h: &[f64]) -> Result<TraceChain> {
    if h.len() != chain.len() {
        return Err(Error::InvalidInput("h has wrong length".into()));
    }
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("h must be finite and nonnegative".into()));
    }
    let f = StateSet::new((0..chain.len()).filter(|&s| h[s] > 0.0));
    let rows = trace_rates_by_hitting(chain, &f)?;
    let weights: Vec<f64> = f.iter().map(|s| h[s]).collect();
    let rows = rows
        .into_iter()
        .zip(&weights)
        .map(|(row, &w)| row.into_iter().map(|(j, r)| (j, r / w)).collect())
        .collect();
    Ok(TraceChain::new(chain, f, weights, rows))
}

pub fn trace_stationary(trace: &TraceChain, base: &StationaryMeasure) -> Result<StationaryMeasure> {
    trace_stationary_with(trace, base, &Tolerances::default())
}

/// Normalized `h·μ` on the support, verified against the trace generator.
pub fn trace_stationary_with(
    trace: &TraceChain,
    base: &StationaryMeasure,
    tol: &Tolerances,
) -> Result<StationaryMeasure> {
    let raw: Vec<f64> = trace
        .support
        .iter()
        .zip(&trace.weights)
        .map(|(s, w)| w * base.mu[s])
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SolverFailure("conditioned measure has no mass".into()));
    }
    let mu = raw.iter().map(|m| m / total).collect();
    let measure = StationaryMeasure::from_mu(&trace.chain, mu, tol);
    if measure.invariance_residual > tol.relative.max(1e3 * f64::EPSILON) {
        return Err(Error::SolverFailure(format!(
            "conditioned measure is not invariant for the trace (residual {:e})",
            measure.invariance_residual
        )));
    }
    Ok(measure)
}

/// Result of restricting a path to a subset.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePath {
    pub path: PathSample,
    /// Set when the original path started outside the subset; the leading
    /// excursion is not part of the trace.
    pub dropped_prefix: bool,
}

/// Trace of a simulated path on `a`: excursions outside `a` are excised and
/// adjacent pieces in the same state merged. Total duration equals the
/// occupation time of `a` over the original horizon.
pub fn extract_trace_path(path: &PathSample, a: &StateSet) -> Result<TracePath> {
    let mut segments: Vec<Segment> = Vec::new();
    for seg in path.segments.iter().filter(|s| a.contains(s.state)) {
        match segments.last_mut() {
            Some(last) if last.state == seg.state => last.duration += seg.duration,
            _ => segments.push(*seg),
        }
    }
    let Some(first) = segments.first() else {
        return Err(Error::NeverVisitsSet);
    };
    let start = first.state;
    let horizon = segments.iter().map(|s| s.duration).sum::<SimTime>();
    let end_state = segments.last().map(|s| s.state).unwrap_or(start);
    Ok(TracePath {
        dropped_prefix: !a.contains(path.start),
        path: PathSample {
            start,
            segments,
            horizon,
            stop_reason: path.stop_reason,
            end_state,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{stationary_measure, ChainSpec};
    use crate::sim::StopReason;

    fn path3() -> Chain {
        let mut s = ChainSpec::new(["a", "x", "b"]).unwrap();
        for (p, q) in [("a", "x"), ("x", "a"), ("x", "b"), ("b", "x")] {
            s.add_rate(p, q, 1.0).unwrap();
        }
        Chain::build(&s).unwrap()
    }

    #[test]
    fn single_elimination_formula() {
        let c = path3();
        let f = c.set(&["a", "b"]).unwrap();
        let t = trace_by_elimination(&c, &f).unwrap();
        assert_eq!(t.rate(0, 2), 0.5);
        let h = trace_by_hitting(&c, &f).unwrap();
        assert!((h.rate(0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_support_is_identity() {
        let c = path3();
        let t = trace_by_hitting(&c, &StateSet::full(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(t.rate(i, j), c.rate(i, j));
            }
        }
    }

    #[test]
    fn empty_support_rejected() {
        let c = path3();
        assert_eq!(
            trace_by_hitting(&c, &StateSet::empty()).unwrap_err(),
            Error::EmptySupport
        );
        assert_eq!(
            trace_by_elimination(&c, &StateSet::empty()).unwrap_err(),
            Error::EmptySupport
        );
        assert_eq!(h_trace(&c, &[0.0; 3]).unwrap_err(), Error::EmptySupport);
    }

    #[test]
    fn scaled_weight_scales_rates() {
        let c = path3();
        let ind = h_trace(&c, &[1.0, 0.0, 1.0]).unwrap();
        let dbl = h_trace(&c, &[2.0, 0.0, 2.0]).unwrap();
        assert!((dbl.rate(0, 2) - ind.rate(0, 2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_measure_conditions_to_uniform() {
        let c = path3();
        let mu = stationary_measure(&c).unwrap();
        let t = trace_by_hitting(&c, &c.set(&["a", "b"]).unwrap()).unwrap();
        let nu = trace_stationary(&t, &mu).unwrap();
        assert!((nu.mu[0] - 0.5).abs() < 1e-14);
        assert!(nu.reversible);
    }

    fn seg(state: usize, d: f64) -> Segment {
        Segment {
            state,
            duration: SimTime::from_secs(d),
        }
    }

    #[test]
    fn trace_path_merges_across_excursions() {
        let p = PathSample {
            start: 0,
            segments: vec![seg(0, 1.0), seg(1, 0.5), seg(0, 2.0)],
            horizon: SimTime::from_secs(1.0) + SimTime::from_secs(0.5) + SimTime::from_secs(2.0),
            stop_reason: StopReason::Horizon,
            end_state: 0,
        };
        let t = extract_trace_path(&p, &StateSet::singleton(0)).unwrap();
        assert!(!t.dropped_prefix);
        assert_eq!(t.path.segments.len(), 1);
        assert_eq!(t.path.horizon.as_secs(), 3.0);
        assert_eq!(t.path.horizon, p.occupation(&StateSet::singleton(0)));

        let inside = extract_trace_path(&p, &StateSet::new([0, 1])).unwrap();
        assert_eq!(inside.path, p);

        assert_eq!(
            extract_trace_path(&p, &StateSet::singleton(2)).unwrap_err(),
            Error::NeverVisitsSet
        );
    }
}
