//! Valley and tunneling analysis over a family of chains indexed by N.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{
    expected_additive_until_hitting_all, stationary_measure_with, Chain, ChainSpec, StateSet, StationaryMeasure,
    Tolerances,
};
use crate::error::{Error, Result};
use crate::fit::{Assessment, Verdict};
use crate::potential::{capacity, capacity_value, mean_set_rate, point_capacity};
use crate::trace::{trace_by_hitting, TraceChain};

pub type Generator = Arc<dyn Fn(f64) -> Result<ChainSpec> + Send + Sync>;

/// A sequence of chains `N ↦ (E_N, R_N)` evaluated on a grid of N values.
#[derive(Clone)]
pub struct ChainFamily {
    pub label: String,
    pub n_grid: Vec<f64>,
    /// Chains of this family may violate irreducibility or have absorbing
    /// states; only simulation is available.
    pub simulation_only: bool,
    generator: Generator,
}

impl fmt::Debug for ChainFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainFamily")
            .field("label", &self.label)
            .field("n_grid", &self.n_grid)
            .field("simulation_only", &self.simulation_only)
            .finish_non_exhaustive()
    }
}

impl ChainFamily {
    pub fn new<F>(label: impl Into<String>, n_grid: Vec<f64>, generator: F) -> ChainFamily
    where
        F: Fn(f64) -> Result<ChainSpec> + Send + Sync + 'static,
    {
        ChainFamily {
            label: label.into(),
            n_grid,
            simulation_only: false,
            generator: Arc::new(generator),
        }
    }

    pub fn simulation_only(mut self, flag: bool) -> Self {
        self.simulation_only = flag;
        self
    }

    pub fn with_grid(mut self, n_grid: Vec<f64>) -> Self {
        self.n_grid = n_grid;
        self
    }

    pub fn spec(&self, n: f64) -> Result<ChainSpec> {
        (self.generator)(n)
    }

    /// Validated chain at N; refused for simulation-only families.
    pub fn chain(&self, n: f64) -> Result<Chain> {
        if self.simulation_only {
            return Err(Error::SimulationOnly(self.label.clone()));
        }
        Chain::build(&self.spec(n)?)
    }

    /// Chain at N without irreducibility checks, for simulation.
    pub fn chain_for_simulation(&self, n: f64) -> Result<Chain> {
        let spec = self.spec(n)?;
        if self.simulation_only {
            Ok(Chain::build_relaxed(&spec))
        } else {
            Chain::build(&spec)
        }
    }
}

/// Glob match where `*` stands for any (possibly empty) substring.
fn glob_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !text.starts_with(first) || text.len() < first.len() + last.len() || !text.ends_with(last) {
        return false;
    }
    let mut rest = &text[first.len()..text.len() - last.len()];
    for part in &parts[1..parts.len() - 1] {
        match rest.find(part) {
            Some(i) => rest = &rest[i + part.len()..],
            None => return false,
        }
    }
    true
}

/// A set of states named by labels or `*` patterns, resolved per N.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SetSelector(pub Vec<String>);

impl SetSelector {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(items: I) -> Self {
        Self(items.into_iter().map(Into::into).collect())
    }

    pub fn resolve(&self, chain: &Chain) -> Result<StateSet> {
        self.resolve_with(chain.labels(), |l| chain.index_of(l))
    }

    pub fn resolve_spec(&self, spec: &ChainSpec) -> Result<StateSet> {
        self.resolve_with(spec.states(), |l| spec.index_of(l))
    }

    fn resolve_with(&self, labels: &[String], index_of: impl Fn(&str) -> Result<usize>) -> Result<StateSet> {
        let mut out = Vec::new();
        for item in &self.0 {
            if item.contains('*') {
                let before = out.len();
                out.extend((0..labels.len()).filter(|&s| glob_match(item, &labels[s])));
                if out.len() == before {
                    return Err(Error::UnknownState(item.clone()));
                }
            } else {
                out.push(index_of(item)?);
            }
        }
        Ok(StateSet::new(out))
    }
}

/// Well, basin and attractor declared by label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValleySpec {
    pub well: SetSelector,
    pub basin: SetSelector,
    pub attractor: String,
}

impl ValleySpec {
    pub fn resolve(&self, chain: &Chain) -> Result<ResolvedValley> {
        ResolvedValley::new(
            chain.len(),
            self.well.resolve(chain)?,
            self.basin.resolve(chain)?,
            chain.index_of(&self.attractor)?,
        )
    }

    pub fn resolve_spec(&self, spec: &ChainSpec) -> Result<ResolvedValley> {
        ResolvedValley::new(
            spec.len(),
            self.well.resolve_spec(spec)?,
            self.basin.resolve_spec(spec)?,
            spec.index_of(&self.attractor)?,
        )
    }
}

/// `(W, B, ξ)` in state indices with `B^c` and `Δ = B ∖ W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedValley {
    pub well: StateSet,
    pub basin: StateSet,
    pub attractor: usize,
    pub exterior: StateSet,
    pub annulus: StateSet,
}

impl ResolvedValley {
    pub fn new(n: usize, well: StateSet, basin: StateSet, attractor: usize) -> Result<Self> {
        if well.is_empty() {
            return Err(Error::EmptySupport);
        }
        if !well.is_subset(&basin) {
            return Err(Error::InvalidInput("well must lie inside the basin".into()));
        }
        if !well.contains(attractor) {
            return Err(Error::InvalidInput("attractor must lie in the well".into()));
        }
        if basin.len() >= n {
            return Err(Error::InvalidInput(
                "basin must be a proper subset of the state space".into(),
            ));
        }
        Ok(Self {
            exterior: basin.complement(n),
            annulus: basin.difference(&well),
            well,
            basin,
            attractor,
        })
    }
}

/// Wells `ℰ¹, …, ℰ^κ` with attractors, declared by label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPartition {
    pub wells: Vec<SetSelector>,
    pub attractors: Vec<String>,
}

impl MetaPartition {
    pub fn resolve(&self, chain: &Chain) -> Result<ResolvedPartition> {
        let wells = self
            .wells
            .iter()
            .map(|w| w.resolve(chain))
            .collect::<Result<Vec<_>>>()?;
        let attractors = self
            .attractors
            .iter()
            .map(|a| chain.index_of(a))
            .collect::<Result<Vec<_>>>()?;
        ResolvedPartition::new(chain.len(), wells, attractors)
    }

    pub fn resolve_spec(&self, spec: &ChainSpec) -> Result<ResolvedPartition> {
        let wells = self
            .wells
            .iter()
            .map(|w| w.resolve_spec(spec))
            .collect::<Result<Vec<_>>>()?;
        let attractors = self
            .attractors
            .iter()
            .map(|a| spec.index_of(a))
            .collect::<Result<Vec<_>>>()?;
        ResolvedPartition::new(spec.len(), wells, attractors)
    }
}

/// Partition in state indices: wells, their union `ℰ`, the annulus `Δ` and
/// the projection `Ψ` (`assignment[η] = Some(x)` for `η ∈ ℰ^x`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPartition {
    pub wells: Vec<StateSet>,
    pub attractors: Vec<usize>,
    pub metastates: StateSet,
    pub annulus: StateSet,
    pub assignment: Vec<Option<usize>>,
}

impl ResolvedPartition {
    pub fn new(n: usize, wells: Vec<StateSet>, attractors: Vec<usize>) -> Result<Self> {
        if wells.len() < 2 {
            return Err(Error::InvalidInput("a partition needs at least two wells".into()));
        }
        if attractors.len() != wells.len() {
            return Err(Error::InvalidInput("one attractor per well is required".into()));
        }
        let mut assignment = vec![None; n];
        for (x, w) in wells.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::EmptySupport);
            }
            if !w.contains(attractors[x]) {
                return Err(Error::InvalidInput(format!(
                    "attractor of well {} lies outside it",
                    x + 1
                )));
            }
            for s in w.iter() {
                if s >= n {
                    return Err(Error::InvalidInput("state index out of range".into()));
                }
                if assignment[s].replace(x).is_some() {
                    return Err(Error::OverlappingSets);
                }
            }
        }
        let metastates = StateSet::new((0..n).filter(|&s| assignment[s].is_some()));
        Ok(Self {
            annulus: metastates.complement(n),
            metastates,
            wells,
            attractors,
            assignment,
        })
    }

    /// `ℰ̆^x`: the union of all other wells.
    pub fn others(&self, x: usize) -> StateSet {
        self.metastates.difference(&self.wells[x])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionMode {
    General,
    Reversible,
}

/// `r_N(W, B^c)` from the trace on `W ∪ B^c`.
pub fn escape_rate(chain: &Chain, mu: &StationaryMeasure, valley: &ResolvedValley) -> Result<f64> {
    let support = valley.well.union(&valley.exterior);
    let trace = trace_by_hitting(chain, &support)?;
    mean_set_rate(&trace, mu, &valley.well, &valley.exterior)
}

/// Depth `μ(W)/Cap(W,B^c)` for reversible measures, `1/r_N(W,B^c)` otherwise.
///
/// The capacity is taken from the escape sum over W, a sum of positive
/// terms only.
pub fn valley_depth(chain: &Chain, mu: &StationaryMeasure, valley: &ResolvedValley) -> Result<f64> {
    if mu.reversible {
        Ok(mu.mass(&valley.well) / capacity(chain, mu, &valley.well, &valley.exterior)?.escape_value)
    } else {
        Ok(1.0 / escape_rate(chain, mu, valley)?)
    }
}

/// One condition evaluated along the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    /// One-based well index for per-well conditions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub well: Option<usize>,
    pub description: String,
    pub assessment: Assessment,
    /// Whether the condition takes part in the overall verdict.
    pub required: bool,
    pub holds: bool,
}

impl ConditionResult {
    fn vanishing(
        name: &str,
        well: Option<usize>,
        description: &str,
        grid: &[f64],
        values: Vec<f64>,
        required: bool,
    ) -> Self {
        let assessment = Assessment::of(grid, values);
        Self {
            name: name.to_string(),
            well: well.map(|x| x + 1),
            description: description.to_string(),
            holds: assessment.vanishes(),
            assessment,
            required,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyReport {
    pub family: String,
    pub mode: ConditionMode,
    pub valley: ValleySpec,
    pub grid: Vec<f64>,
    pub reversible: Vec<bool>,
    /// Depth sequence; capacity route when reversible, rate route otherwise.
    pub depth: Assessment,
    /// `1/r_N(W,B^c)` from trace rates.
    pub depth_by_rate: Vec<f64>,
    pub conditions: Vec<ConditionResult>,
    /// All required conditions vanish.
    pub holds: bool,
    /// The exponential exit law is not decidable from rates at fixed N.
    pub exit_law: String,
}

/// Value of [`ValleyReport::exit_law`].
pub const EXIT_LAW_NOT_DECIDED: &str = "not decided here; check with `simulate` (V2)";

struct ValleyPoint {
    reversible: bool,
    depth: f64,
    depth_by_rate: f64,
    values: Vec<f64>,
}

fn max_over(values: &[f64], set: &StateSet) -> f64 {
    set.iter().map(|s| values[s]).fold(0.0, f64::max)
}

fn indicator(n: usize, set: &StateSet) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for s in set.iter() {
        g[s] = 1.0;
    }
    g
}

/// Evaluates the valley conditions at every grid point and fits their decay.
pub fn check_valley_conditions(
    family: &ChainFamily,
    spec: &ValleySpec,
    mode: ConditionMode,
    tol: &Tolerances,
) -> Result<ValleyReport> {
    let grid = family.n_grid.clone();
    let points: Vec<ValleyPoint> = grid
        .par_iter()
        .map(|&n| valley_point(family, spec, mode, tol, n))
        .collect::<Result<_>>()?;

    let series = |k: usize| points.iter().map(|p| p.values[k]).collect::<Vec<f64>>();
    let conditions = match mode {
        ConditionMode::General => vec![
            ConditionResult::vanishing(
                "cc1",
                None,
                "sup over the well of E[∫ up to T_attractor of the escape rate R^W on W]",
                &grid,
                series(0),
                true,
            ),
            ConditionResult::vanishing(
                "cc2",
                None,
                "r_N(W,B^c) · sup over the well of E[time in W before T_attractor]",
                &grid,
                series(1),
                true,
            ),
            ConditionResult::vanishing(
                "ccb",
                None,
                "r_N(W,B^c) · sup over the well of E[time in the annulus before leaving B]",
                &grid,
                series(2),
                true,
            ),
        ],
        ConditionMode::Reversible => vec![
            ConditionResult::vanishing(
                "capacity-ratio",
                None,
                "Cap(W,B^c) / min over W∖{attractor} of Cap(η, attractor); 0 for a single-state well",
                &grid,
                series(0),
                true,
            ),
            ConditionResult::vanishing("annulus-mass", None, "μ(B∖W) / μ(W)", &grid, series(1), true),
        ],
    };
    let holds = conditions.iter().filter(|c| c.required).all(|c| c.holds);
    Ok(ValleyReport {
        family: family.label.clone(),
        mode,
        valley: spec.clone(),
        reversible: points.iter().map(|p| p.reversible).collect(),
        depth: Assessment::of(&grid, points.iter().map(|p| p.depth).collect()),
        depth_by_rate: points.iter().map(|p| p.depth_by_rate).collect(),
        grid,
        conditions,
        holds,
        exit_law: EXIT_LAW_NOT_DECIDED.into(),
    })
}

fn valley_point(
    family: &ChainFamily,
    spec: &ValleySpec,
    mode: ConditionMode,
    tol: &Tolerances,
    n: f64,
) -> Result<ValleyPoint> {
    let chain = family.chain(n)?;
    let mu = stationary_measure_with(&chain, tol)?;
    if mode == ConditionMode::Reversible && !mu.reversible {
        return Err(Error::ModeMismatch(mu.balance_residual));
    }
    let v = spec.resolve(&chain)?;
    let size = chain.len();
    let rate = escape_rate(&chain, &mu, &v)?;
    let depth = valley_depth(&chain, &mu, &v)?;
    let xi = StateSet::singleton(v.attractor);
    let values = match mode {
        ConditionMode::General => {
            let support = v.well.union(&v.exterior);
            let trace = trace_by_hitting(&chain, &support)?;
            let mut g = vec![0.0; size];
            for s in v.well.iter() {
                g[s] = escape_rate_at(&trace, s, &v.exterior);
            }
            let cc1 = max_over(&expected_additive_until_hitting_all(&chain, &g, &xi)?, &v.well);
            let in_well = expected_additive_until_hitting_all(&chain, &indicator(size, &v.well), &xi)?;
            let cc2 = rate * max_over(&in_well, &v.well);
            let in_annulus = expected_additive_until_hitting_all(&chain, &indicator(size, &v.annulus), &v.exterior)?;
            let ccb = rate * max_over(&in_annulus, &v.well);
            vec![cc1, cc2, ccb]
        }
        ConditionMode::Reversible => {
            let ratio = if v.well.len() < 2 {
                0.0
            } else {
                capacity(&chain, &mu, &v.well, &v.exterior)?.cap / point_capacity(&chain, &mu, &v.well, v.attractor)?
            };
            vec![ratio, mu.mass(&v.annulus) / mu.mass(&v.well)]
        }
    };
    Ok(ValleyPoint {
        reversible: mu.reversible,
        depth,
        depth_by_rate: 1.0 / rate,
        values,
    })
}

/// Trace rate from base state `s` into `target`.
fn escape_rate_at(trace: &TraceChain, s: usize, target: &StateSet) -> f64 {
    let Some(i) = trace.to_local(s) else { return 0.0 };
    trace
        .chain()
        .out_rates(i)
        .iter()
        .filter(|&&(j, _)| target.contains(trace.to_base(j)))
        .map(|&(_, r)| r)
        .sum()
}

/// How the time scale θ_N is chosen.
#[derive(Clone)]
pub enum TimeScale {
    /// `θ_N = 1 / max_x r_N(ℰ^x, ℰ̆^x)`.
    Auto,
    /// User-supplied `θ_N`, with a label for reports.
    Given {
        label: String,
        theta: Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>,
    },
}

impl TimeScale {
    pub fn given<F>(label: impl Into<String>, theta: F) -> Self
    where
        F: Fn(f64) -> Result<f64> + Send + Sync + 'static,
    {
        TimeScale::Given {
            label: label.into(),
            theta: Arc::new(theta),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TimeScale::Auto => "auto".into(),
            TimeScale::Given { label, .. } => label.clone(),
        }
    }
}

impl fmt::Debug for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Per-N quantities of the tunneling analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunnelingPoint {
    pub n: f64,
    pub theta: f64,
    pub reversible: bool,
    /// `r_N(ℰ^x, ℰ^y)`, zero on the diagonal.
    pub rates: Vec<Vec<f64>>,
    /// `r_N(ℰ^x, ℰ̆^x)`.
    pub escape_rates: Vec<f64>,
    pub well_mass: Vec<f64>,
    pub annulus_mass: f64,
    /// Max relative gap between `μ(ℰ^x) r_N(ℰ^x,ℰ^y)` from trace rates and
    /// from the three-capacity formula (reversible chains only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub three_set_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLimit {
    pub from: usize,
    pub to: usize,
    /// `θ_N r_N(ℰ^x, ℰ^y)` along the grid with its fit.
    pub scaled: Assessment,
    /// `None` when the sequence diverges.
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunnelingReport {
    pub family: String,
    pub theta_rule: String,
    pub grid: Vec<f64>,
    pub points: Vec<TunnelingPoint>,
    /// Fitted limit rates `r(x,y)` (one-based wells in `limits`).
    pub limit_rates: Vec<Vec<f64>>,
    pub limits: Vec<RateLimit>,
    /// One-based wells with all outgoing limit rates zero.
    pub absorbing: Vec<usize>,
    /// One-based non-absorbing wells no other well feeds.
    pub inaccessible: Vec<usize>,
    pub conditions: Vec<ConditionResult>,
    /// (C2), (C3), (H0), (C1) for non-absorbing and (M3) for absorbing wells.
    pub general_route_holds: bool,
    /// (H1), (H0), (H2) for non-absorbing and (M3) for absorbing wells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversible_route_holds: Option<bool>,
    pub note: String,
}

/// Threshold relative to the largest limit rate below which a rate counts as zero.
pub const ABSORBING_THRESHOLD: f64 = 1e-6;

struct TunnelingSample {
    point: TunnelingPoint,
    h1: Option<Vec<f64>>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    c3: Vec<f64>,
    global_annulus: f64,
}

pub fn tunneling_analysis(
    family: &ChainFamily,
    partition: &MetaPartition,
    scale: &TimeScale,
    tol: &Tolerances,
) -> Result<TunnelingReport> {
    let grid = family.n_grid.clone();
    let samples: Vec<TunnelingSample> = grid
        .par_iter()
        .map(|&n| tunneling_point(family, partition, scale, tol, n))
        .collect::<Result<_>>()?;
    let k = partition.wells.len();

    let mut limits = Vec::new();
    let mut limit_rates = vec![vec![0.0; k]; k];
    for x in 0..k {
        for y in 0..k {
            if x == y {
                continue;
            }
            let scaled: Vec<f64> = samples.iter().map(|s| s.point.theta * s.point.rates[x][y]).collect();
            let scaled = Assessment::of(&grid, scaled);
            let limit = scaled.limit();
            limit_rates[x][y] = limit.unwrap_or(f64::MAX);
            limits.push(RateLimit {
                from: x + 1,
                to: y + 1,
                scaled,
                limit,
            });
        }
    }
    let max_rate = limit_rates.iter().flatten().copied().fold(0.0, f64::max);
    let zero = |v: f64| v <= ABSORBING_THRESHOLD * max_rate;
    let absorbing: Vec<usize> = (0..k)
        .filter(|&x| zero((0..k).map(|y| limit_rates[x][y]).sum()))
        .collect();
    let inaccessible: Vec<usize> = (0..k)
        .filter(|x| !absorbing.contains(x))
        .filter(|&x| zero((0..k).map(|y| limit_rates[y][x]).sum()))
        .collect();

    let per_well = |f: &dyn Fn(&TunnelingSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let mut conditions = Vec::new();
    for l in &limits {
        let holds = l.limit.is_some() && l.scaled.verdict != Verdict::Inconclusive;
        conditions.push(ConditionResult {
            name: "H0".into(),
            well: Some(l.from),
            description: format!("θ_N r_N(ℰ^{}, ℰ^{}) has a finite limit", l.from, l.to),
            assessment: l.scaled.clone(),
            required: true,
            holds,
        });
    }
    let reversible = samples.iter().all(|s| s.h1.is_some());
    for x in 0..k {
        let is_abs = absorbing.contains(&x);
        conditions.push(ConditionResult::vanishing(
            "C2",
            Some(x),
            "sup over the well of E[∫ up to T_attractor of the rate into the other wells]",
            &grid,
            per_well(&|s| s.c2[x]),
            true,
        ));
        conditions.push(ConditionResult::vanishing(
            "C3",
            Some(x),
            "r_N(ℰ^x, ℰ̆^x) · sup over the well of E[time in the well before T_attractor]",
            &grid,
            per_well(&|s| s.c3[x]),
            true,
        ));
        conditions.push(ConditionResult::vanishing(
            "C1",
            Some(x),
            "sup over the well of E[time in Δ before reaching another well] / θ_N",
            &grid,
            per_well(&|s| s.c1[x]),
            !is_abs,
        ));
        if reversible {
            conditions.push(ConditionResult::vanishing(
                "H1",
                Some(x),
                "Cap(ℰ^x, ℰ̆^x) / min over ℰ^x∖{attractor} of Cap(η, attractor); 0 for a single-state well",
                &grid,
                per_well(&|s| s.h1.as_ref().map_or(0.0, |h| h[x])),
                false,
            ));
        }
        conditions.push(ConditionResult::vanishing(
            "H2",
            Some(x),
            "μ(Δ) / μ(ℰ^x)",
            &grid,
            per_well(&|s| s.point.annulus_mass / s.point.well_mass[x]),
            false,
        ));
        let h2p =
            per_well(&|s| s.point.annulus_mass / (s.point.theta * s.point.escape_rates[x] * s.point.well_mass[x]));
        conditions.push(ConditionResult::vanishing(
            "H2'",
            Some(x),
            "μ(Δ) / (θ_N r_N(ℰ^x, ℰ̆^x) μ(ℰ^x))",
            &grid,
            h2p.clone(),
            false,
        ));
        if is_abs {
            conditions.push(ConditionResult::vanishing(
                "M3",
                Some(x),
                "annulus occupation bound for an absorbing well, via μ(Δ) / (θ_N r_N(ℰ^x, ℰ̆^x) μ(ℰ^x))",
                &grid,
                h2p,
                true,
            ));
        }
    }
    conditions.push(ConditionResult::vanishing(
        "M3'",
        None,
        "sup over Δ of E[time to reach the wells] / θ_N (global annulus check)",
        &grid,
        per_well(&|s| s.global_annulus),
        false,
    ));

    let holds = |name: &str, pred: &dyn Fn(usize) -> bool| {
        conditions
            .iter()
            .filter(|c| c.name == name && c.well.is_none_or(|w| pred(w - 1)))
            .all(|c| c.holds)
    };
    let non_abs = |x: usize| !absorbing.contains(&x);
    let abs = |x: usize| absorbing.contains(&x);
    let any = |_: usize| true;
    let general_route_holds =
        holds("C2", &any) && holds("C3", &any) && holds("H0", &any) && holds("C1", &non_abs) && holds("M3", &abs);
    let reversible_route_holds =
        reversible.then(|| holds("H1", &any) && holds("H0", &any) && holds("H2", &non_abs) && holds("M3", &abs));

    Ok(TunnelingReport {
        family: family.label.clone(),
        theta_rule: scale.label(),
        grid,
        points: samples.into_iter().map(|s| s.point).collect(),
        limit_rates,
        limits,
        absorbing: absorbing.iter().map(|x| x + 1).collect(),
        inaccessible: inaccessible.iter().map(|x| x + 1).collect(),
        conditions,
        general_route_holds,
        reversible_route_holds,
        note: "asymptotic statements are read from power-law fits over the grid; \
               path-space convergence is not checked here"
            .into(),
    })
}

fn tunneling_point(
    family: &ChainFamily,
    partition: &MetaPartition,
    scale: &TimeScale,
    tol: &Tolerances,
    n: f64,
) -> Result<TunnelingSample> {
    let chain = family.chain(n)?;
    let mu = stationary_measure_with(&chain, tol)?;
    let p = partition.resolve(&chain)?;
    let k = p.wells.len();
    let size = chain.len();
    let trace = trace_by_hitting(&chain, &p.metastates)?;

    let mut rates = vec![vec![0.0; k]; k];
    let mut escape_rates = vec![0.0; k];
    for x in 0..k {
        for y in 0..k {
            if x != y {
                rates[x][y] = mean_set_rate(&trace, &mu, &p.wells[x], &p.wells[y])?;
            }
        }
        escape_rates[x] = mean_set_rate(&trace, &mu, &p.wells[x], &p.others(x))?;
    }
    let theta = match scale {
        TimeScale::Auto => 1.0 / escape_rates.iter().copied().fold(0.0, f64::max),
        TimeScale::Given { theta, .. } => theta(n)?,
    };
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidInput(format!("time scale is not positive at N={n}")));
    }
    let well_mass: Vec<f64> = p.wells.iter().map(|w| mu.mass(w)).collect();
    let annulus_mass = mu.mass(&p.annulus);

    let mut c1 = vec![0.0; k];
    let mut c2 = vec![0.0; k];
    let mut c3 = vec![0.0; k];
    let delta = indicator(size, &p.annulus);
    for x in 0..k {
        let w = &p.wells[x];
        let others = p.others(x);
        let xi = StateSet::singleton(p.attractors[x]);
        if !p.annulus.is_empty() {
            let occ = expected_additive_until_hitting_all(&chain, &delta, &others)?;
            c1[x] = max_over(&occ, w) / theta;
        }
        let mut g = vec![0.0; size];
        for s in w.iter() {
            g[s] = escape_rate_at(&trace, s, &others);
        }
        c2[x] = max_over(&expected_additive_until_hitting_all(&chain, &g, &xi)?, w);
        let in_well = expected_additive_until_hitting_all(&chain, &indicator(size, w), &xi)?;
        c3[x] = escape_rates[x] * max_over(&in_well, w);
    }
    let global_annulus = if p.annulus.is_empty() {
        0.0
    } else {
        let t = expected_additive_until_hitting_all(&chain, &vec![1.0; size], &p.metastates)?;
        max_over(&t, &p.annulus) / theta
    };

    let (h1, three_set_residual) = if mu.reversible {
        let mut h1 = vec![0.0; k];
        let mut caps = vec![0.0; k];
        for x in 0..k {
            caps[x] = capacity_value(&chain, &mu, &p.wells[x], &p.others(x))?;
            if p.wells[x].len() >= 2 {
                h1[x] = caps[x] / point_capacity(&chain, &mu, &p.wells[x], p.attractors[x])?;
            }
        }
        let mut worst = 0.0f64;
        for x in 0..k {
            for y in 0..k {
                if x == y {
                    continue;
                }
                let pair = p.wells[x].union(&p.wells[y]);
                let rest = p.metastates.difference(&pair);
                let joint = capacity_value(&chain, &mu, &pair, &rest)?;
                let via_caps = 0.5 * (caps[x] + caps[y] - joint);
                let via_trace = well_mass[x] * rates[x][y];
                let scale = caps[x].max(caps[y]).max(joint).max(via_trace.abs());
                if scale > 0.0 {
                    worst = worst.max((via_caps - via_trace).abs() / scale);
                }
            }
        }
        (Some(h1), Some(worst))
    } else {
        (None, None)
    };

    Ok(TunnelingSample {
        point: TunnelingPoint {
            n,
            theta,
            reversible: mu.reversible,
            rates,
            escape_rates,
            well_mass,
            annulus_mass,
            three_set_residual,
        },
        h1,
        c1,
        c2,
        c3,
        global_annulus,
    })
}
