//! Finite continuous-time Markov chains: construction, validation, stationary
//! measures and expected additive functionals.
//!
//! A chain is specified by its off-diagonal jump rates `R(η, ξ)`. The holding
//! rate is `λ(η) = Σ_{ξ≠η} R(η, ξ)` and the embedded jump chain moves with
//! probabilities `p(η, ξ) = R(η, ξ) / λ(η)`. The generator acts on functions as
//! `(L f)(η) = Σ_ξ R(η, ξ) (f(ξ) − f(η))`.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Sorted set of state indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StateSet(Vec<usize>);

impl StateSet {
    pub fn new<I: IntoIterator<Item = usize>>(states: I) -> Self {
        let mut v: Vec<usize> = states.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn singleton(state: usize) -> Self {
        Self(vec![state])
    }

    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.0.binary_search(&state).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        StateSet::new(self.iter().chain(other.iter()))
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        StateSet(self.iter().filter(|s| !other.contains(*s)).collect())
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        StateSet(self.iter().filter(|s| other.contains(*s)).collect())
    }

    pub fn complement(&self, n: usize) -> StateSet {
        StateSet((0..n).filter(|s| !self.contains(*s)).collect())
    }

    pub fn is_disjoint(&self, other: &StateSet) -> bool {
        self.iter().all(|s| !other.contains(s))
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.iter().all(|s| other.contains(s))
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for s in self.iter() {
            m[s] = true;
        }
        m
    }
}

impl FromIterator<usize> for StateSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        StateSet::new(iter)
    }
}

/// Ordered state labels plus sparse off-diagonal rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    states: Vec<String>,
    index: HashMap<String, usize>,
    rates: BTreeMap<(usize, usize), f64>,
}

impl ChainSpec {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(states: I) -> Result<Self> {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::DuplicateState(s.clone()));
            }
        }
        Ok(Self {
            states,
            index,
            rates: BTreeMap::new(),
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    /// Adds `rate` to the edge `from -> to`. Zero rates are not stored.
    pub fn add_rate(&mut self, from: &str, to: &str, rate: f64) -> Result<&mut Self> {
        let i = self.index_of(from)?;
        let j = self.index_of(to)?;
        self.add_rate_by_index(i, j, rate)
    }

    pub fn add_rate_by_index(&mut self, from: usize, to: usize, rate: f64) -> Result<&mut Self> {
        if from >= self.len() || to >= self.len() {
            return Err(Error::InvalidInput(format!("edge {from}->{to} out of range")));
        }
        if from == to {
            return Err(Error::SelfLoop(self.states[from].clone()));
        }
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::InvalidRate {
                from: self.states[from].clone(),
                to: self.states[to].clone(),
                rate,
            });
        }
        if rate > 0.0 {
            *self.rates.entry((from, to)).or_insert(0.0) += rate;
        }
        Ok(self)
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates.get(&(from, to)).copied().unwrap_or(0.0)
    }

    /// Iterates over `(from, to, rate)` in lexicographic index order.
    pub fn rates(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rates.iter().map(|(&(i, j), &r)| (i, j, r))
    }

    /// Same chain with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<ChainSpec> {
        let mut out = ChainSpec::new(self.states.iter().cloned())?;
        for (i, j, r) in self.rates() {
            out.add_rate_by_index(i, j, r * factor)?;
        }
        Ok(out)
    }
}

/// A validated chain with holding rates and jump probabilities.
#[derive(Debug, Clone)]
pub struct Chain {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    out: Vec<Vec<(usize, f64)>>,
    holding: Vec<f64>,
    irreducible: bool,
}

impl Chain {
    /// Builds a chain, requiring positive holding rates and irreducibility.
    pub fn build(spec: &ChainSpec) -> Result<Chain> {
        let chain = Chain::build_relaxed(spec);
        if let Some(i) = chain.holding.iter().position(|&l| l <= 0.0) {
            return Err(Error::ZeroHoldingRate(chain.labels[i].clone()));
        }
        if !chain.irreducible {
            let classes = chain
                .communicating_classes()
                .into_iter()
                .map(|c| c.into_iter().map(|s| chain.labels[s].clone()).collect())
                .collect();
            return Err(Error::NotIrreducible(classes));
        }
        Ok(chain)
    }

    /// Builds a chain without the holding-rate and irreducibility checks.
    /// Such chains can be simulated, but stationary and potential-theoretic
    /// quantities are unavailable.
    pub fn build_relaxed(spec: &ChainSpec) -> Chain {
        let n = spec.len();
        let mut out = vec![Vec::new(); n];
        for (i, j, r) in spec.rates() {
            out[i].push((j, r));
        }
        Chain::from_rows(spec.states.clone(), out)
    }

    pub(crate) fn from_rows(labels: Vec<String>, mut out: Vec<Vec<(usize, f64)>>) -> Chain {
        for row in &mut out {
            row.sort_by_key(|&(j, _)| j);
        }
        let holding = out.iter().map(|row| row.iter().map(|&(_, r)| r).sum()).collect();
        let index = labels.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut chain = Chain {
            labels,
            index,
            out,
            holding,
            irreducible: false,
        };
        chain.irreducible = chain.check_irreducible();
        chain
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, state: usize) -> &str {
        &self.labels[state]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    /// Resolves a list of labels into a state set.
    pub fn set<S: AsRef<str>>(&self, labels: &[S]) -> Result<StateSet> {
        labels
            .iter()
            .map(|l| self.index_of(l.as_ref()))
            .collect::<Result<Vec<_>>>()
            .map(StateSet::new)
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// Holding rate λ(η).
    pub fn holding(&self, state: usize) -> f64 {
        self.holding[state]
    }

    pub fn holding_rates(&self) -> &[f64] {
        &self.holding
    }

    pub fn max_holding(&self) -> f64 {
        self.holding.iter().copied().fold(0.0, f64::max)
    }

    /// Outgoing `(target, rate)` pairs sorted by target.
    pub fn out_rates(&self, state: usize) -> &[(usize, f64)] {
        &self.out[state]
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        let row = &self.out[from];
        match row.binary_search_by_key(&to, |&(j, _)| j) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    /// Jump probability p(η, ξ); zero for absorbing η.
    pub fn jump_prob(&self, from: usize, to: usize) -> f64 {
        let l = self.holding[from];
        if l > 0.0 {
            self.rate(from, to) / l
        } else {
            0.0
        }
    }

    pub fn jump_probs(&self, state: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let l = self.holding[state];
        self.out[state].iter().map(move |&(j, r)| (j, r / l))
    }

    /// (L f)(η) for every η.
    pub fn generator_apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.out[i].iter().map(|&(j, r)| r * (f[j] - f[i])).sum())
            .collect()
    }

    /// Row-vector action (μ L)(ξ).
    pub fn generator_left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.len()).map(|i| -mu[i] * self.holding[i]).collect();
        for (i, row) in self.out.iter().enumerate() {
            for &(j, r) in row {
                out[j] += mu[i] * r;
            }
        }
        out
    }

    /// Same chain with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Chain {
        let out = self
            .out
            .iter()
            .map(|row| row.iter().map(|&(j, r)| (j, r * factor)).collect())
            .collect();
        Chain::from_rows(self.labels.clone(), out)
    }

    fn reach(&self, from: usize, forward: bool) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        if n == 0 {
            return seen;
        }
        let incoming = (!forward).then(|| self.incoming());
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(s) = queue.pop_front() {
            let next: Vec<usize> = match &incoming {
                None => self.out[s].iter().map(|&(j, _)| j).collect(),
                Some(inc) => inc[s].clone(),
            };
            for j in next {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Marks the states from which `target` is reachable.
    pub fn can_reach(&self, target: &StateSet) -> Vec<bool> {
        let inc = self.incoming();
        let mut seen = target.mask(self.len());
        let mut queue: VecDeque<usize> = target.iter().collect();
        while let Some(s) = queue.pop_front() {
            for &i in &inc[s] {
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen
    }

    fn incoming(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.len()];
        for (i, row) in self.out.iter().enumerate() {
            for &(j, _) in row {
                inc[j].push(i);
            }
        }
        inc
    }

    fn check_irreducible(&self) -> bool {
        if self.is_empty() {
            return false;
        }
        self.reach(0, true).into_iter().all(|b| b) && self.reach(0, false).into_iter().all(|b| b)
    }

    /// Strongly connected components of the positive-rate graph.
    pub fn communicating_classes(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut assigned = vec![false; n];
        let mut classes = Vec::new();
        for s in 0..n {
            if assigned[s] {
                continue;
            }
            let fwd = self.reach(s, true);
            let bwd = self.reach(s, false);
            let class: Vec<usize> = (0..n).filter(|&j| fwd[j] && bwd[j]).collect();
            for &j in &class {
                assigned[j] = true;
            }
            classes.push(class);
        }
        classes
    }

    fn require_irreducible(&self) -> Result<()> {
        if self.irreducible {
            Ok(())
        } else {
            let classes = self
                .communicating_classes()
                .into_iter()
                .map(|c| c.into_iter().map(|s| self.labels[s].clone()).collect())
                .collect();
            Err(Error::NotIrreducible(classes))
        }
    }
}

/// Numerical tolerances used by solves and verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance on invariance residuals.
    pub relative: f64,
    /// Relative detailed-balance residual below which a measure counts as reversible.
    pub reversibility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            relative: 1e-10,
            reversibility: 1e-8,
        }
    }
}

/// Invariant probability μ and jump-chain measure M = λμ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryMeasure {
    pub mu: Vec<f64>,
    pub jump_measure: Vec<f64>,
    pub reversible: bool,
    /// Max relative detailed-balance residual over edges.
    pub balance_residual: f64,
    /// ‖μL‖∞ / max λ.
    pub invariance_residual: f64,
}

impl StationaryMeasure {
    /// Builds the record for a given normalized μ on `chain`.
    pub fn from_mu(chain: &Chain, mu: Vec<f64>, tol: &Tolerances) -> StationaryMeasure {
        let jump_measure = mu.iter().zip(chain.holding_rates()).map(|(m, l)| m * l).collect();
        let scale = chain.max_holding().max(f64::MIN_POSITIVE);
        let invariance_residual = chain
            .generator_left_apply(&mu)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            / scale;
        let balance_residual = detailed_balance_residual(chain, &mu);
        StationaryMeasure {
            mu,
            jump_measure,
            reversible: balance_residual <= tol.reversibility,
            balance_residual,
            invariance_residual,
        }
    }

    pub fn mass(&self, set: &StateSet) -> f64 {
        set.iter().map(|s| self.mu[s]).sum()
    }

    /// ⟨f⟩_μ
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.mu.iter().zip(f).map(|(m, v)| m * v).sum()
    }

    /// ‖MP − M‖∞ / ‖M‖∞ for the jump chain of `chain`.
    pub fn jump_invariance_residual(&self, chain: &Chain) -> f64 {
        let m = &self.jump_measure;
        let mut mp = vec![0.0; m.len()];
        for (i, &mi) in m.iter().enumerate() {
            if chain.holding(i) > 0.0 {
                for (j, p) in chain.jump_probs(i) {
                    mp[j] += mi * p;
                }
            }
        }
        let norm = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        mp.iter().zip(m).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / norm
    }

    pub fn require_reversible(&self) -> Result<()> {
        if self.reversible {
            Ok(())
        } else {
            Err(Error::NotReversible(self.balance_residual))
        }
    }
}

fn detailed_balance_residual(chain: &Chain, mu: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..chain.len() {
        for &(j, r) in chain.out_rates(i) {
            let a = mu[i] * r;
            let b = mu[j] * chain.rate(j, i);
            let scale = a.max(b);
            if scale > 0.0 {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    worst
}

pub fn stationary_measure(chain: &Chain) -> Result<StationaryMeasure> {
    stationary_measure_with(chain, &Tolerances::default())
}

/// Largest chain solved by state reduction; larger ones use sparse LU.
const REDUCTION_MAX_STATES: usize = 4096;

/// Unnormalized μ by state reduction (censoring one state at a time, last
/// first). Only sums and products of nonnegative numbers are involved, so
/// every entry carries a small relative error regardless of conditioning.
fn stationary_by_reduction(chain: &Chain) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut out: Vec<BTreeMap<usize, f64>> = (0..n).map(|i| chain.out_rates(i).iter().copied().collect()).collect();
    let mut inc: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, row) in out.iter().enumerate() {
        for &j in row.keys() {
            inc[j].push(i);
        }
    }
    // per eliminated state: its holding rate at removal and incoming rates
    let mut removed: Vec<(f64, Vec<(usize, f64)>)> = vec![(0.0, Vec::new()); n];
    for x0 in (1..n).rev() {
        let row = std::mem::take(&mut out[x0]);
        let lambda: f64 = row.values().sum();
        if !(lambda > 0.0) {
            return Err(Error::SolverFailure(format!(
                "state reduction left `{}` without exits",
                chain.label(x0)
            )));
        }
        let mut sources = std::mem::take(&mut inc[x0]);
        sources.sort_unstable();
        sources.dedup();
        let mut incoming = Vec::with_capacity(sources.len());
        for eta in sources {
            let Some(r) = out[eta].remove(&x0) else { continue };
            incoming.push((eta, r));
            for (&xi, &w) in &row {
                if xi != eta {
                    let e = out[eta].entry(xi).or_insert(0.0);
                    if *e == 0.0 {
                        inc[xi].push(eta);
                    }
                    *e += r * w / lambda;
                }
            }
        }
        removed[x0] = (lambda, incoming);
    }
    let mut raw = vec![0.0; n];
    raw[0] = 1.0;
    for x in 1..n {
        let (lambda, incoming) = &removed[x];
        raw[x] = incoming.iter().map(|&(eta, r)| raw[eta] * r).sum::<f64>() / lambda;
    }
    Ok(raw)
}

/// μL = 0 by state reduction for small chains; otherwise sparse LU with
/// μ(s₀) = 1 pinned for the first state. Normalized afterwards.
pub fn stationary_measure_with(chain: &Chain, tol: &Tolerances) -> Result<StationaryMeasure> {
    chain.require_irreducible()?;
    let n = chain.len();
    let mut raw = vec![1.0; n];
    if n > 1 && n <= REDUCTION_MAX_STATES {
        raw = stationary_by_reduction(chain)?;
    } else if n > 1 {
        // unknowns μ_1..μ_{n-1}; equation per column j ≥ 1:
        // λ(j) μ_j − Σ_{i≥1, i≠j} μ_i R(i, j) = R(0, j)
        let mut a = SparseMatrix::new(n - 1);
        let mut rhs = vec![0.0; n - 1];
        for j in 1..n {
            a.add(j - 1, j - 1, chain.holding(j));
        }
        for i in 0..n {
            for &(j, r) in chain.out_rates(i) {
                if j == 0 {
                    continue;
                }
                if i == 0 {
                    rhs[j - 1] += r;
                } else {
                    a.add(j - 1, i - 1, -r);
                }
            }
        }
        let sol = a.factorize()?.solve(&rhs)?;
        raw[1..].copy_from_slice(&sol);
    }
    if raw.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::SolverFailure(
            "stationary solve produced a non-positive mass".into(),
        ));
    }
    let total: f64 = raw.iter().sum();
    let mu: Vec<f64> = raw.iter().map(|m| m / total).collect();
    let measure = StationaryMeasure::from_mu(chain, mu, tol);
    if measure.invariance_residual > tol.relative {
        return Err(Error::SolverFailure(format!(
            "invariance residual {:e} exceeds tolerance",
            measure.invariance_residual
        )));
    }
    Ok(measure)
}

/// Solves `λ(η)u(η) − Σ_{ξ∈I} R(η,ξ)u(ξ) = b(η)` over the interior `I`,
/// with `u ≡ 0` off the interior. Returns u on the full state space.
pub(crate) fn solve_interior(chain: &Chain, interior: &StateSet, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = chain.len();
    let local: Vec<Option<usize>> = {
        let mut l = vec![None; n];
        for (k, s) in interior.iter().enumerate() {
            l[s] = Some(k);
        }
        l
    };
    let m = interior.len();
    let mut a = SparseMatrix::new(m);
    for (k, s) in interior.iter().enumerate() {
        a.add(k, k, chain.holding(s));
        for &(j, r) in chain.out_rates(s) {
            if let Some(kj) = local[j] {
                a.add(k, kj, -r);
            }
        }
    }
    let local_rhs: Vec<Vec<f64>> = rhs.iter().map(|b| interior.iter().map(|s| b[s]).collect()).collect();
    let fac = a.factorize()?;
    let sols = fac.solve_many(&local_rhs)?;
    Ok(sols
        .into_iter()
        .map(|sol| {
            let mut u = vec![0.0; n];
            for (k, s) in interior.iter().enumerate() {
                u[s] = sol[k];
            }
            u
        })
        .collect())
}

fn check_state(chain: &Chain, state: usize) -> Result<()> {
    if state < chain.len() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("state index {state} out of range")))
    }
}

/// `u(η) = E_η[∫₀^{T_A} g(η_s) ds]` for every η (zero on the target).
pub fn expected_additive_until_hitting_all(chain: &Chain, g: &[f64], target: &StateSet) -> Result<Vec<f64>> {
    if target.is_empty() {
        return Err(Error::EmptySupport);
    }
    if g.len() != chain.len() {
        return Err(Error::InvalidInput("g has wrong length".into()));
    }
    let interior = target.complement(chain.len());
    let mut u = solve_interior(chain, &interior, &[g.to_vec()])?;
    Ok(u.pop().unwrap())
}

/// `E_start[∫₀^{T_A} g(η_s) ds]` where `T_A` is the hitting time of `target`.
pub fn expected_additive_until_hitting(chain: &Chain, g: &[f64], start: usize, target: &StateSet) -> Result<f64> {
    check_state(chain, start)?;
    if target.contains(start) {
        return Ok(0.0);
    }
    Ok(expected_additive_until_hitting_all(chain, g, target)?[start])
}

/// `P_η[T_one < T_zero]` for every η: 1 on `one`, 0 on `zero`, harmonic elsewhere.
pub fn hitting_probability(chain: &Chain, one: &StateSet, zero: &StateSet) -> Result<Vec<f64>> {
    if !one.is_disjoint(zero) {
        return Err(Error::OverlappingSets);
    }
    let n = chain.len();
    let boundary = one.union(zero);
    let interior = boundary.complement(n);
    let one_mask = one.mask(n);
    let mut b = vec![0.0; n];
    for s in interior.iter() {
        b[s] = chain
            .out_rates(s)
            .iter()
            .filter(|&&(j, _)| one_mask[j])
            .map(|&(_, r)| r)
            .sum();
    }
    let mut u = solve_interior(chain, &interior, &[b])?.pop().unwrap();
    for s in one.iter() {
        u[s] = 1.0;
    }
    Ok(u)
}

/// `P_start[T⁺_B < T⁺_A]` for `start ∈ A`, via one jump-chain step into the
/// harmonic function that is 1 on B and 0 on A.
pub fn escape_probability(chain: &Chain, start: usize, a: &StateSet, b: &StateSet) -> Result<f64> {
    check_state(chain, start)?;
    if !a.contains(start) {
        return Err(Error::InvalidInput("start must lie in A".into()));
    }
    if !a.is_disjoint(b) {
        return Err(Error::OverlappingSets);
    }
    if b.is_empty() || chain.holding(start) <= 0.0 {
        return Ok(0.0);
    }
    let h = hitting_probability(chain, b, a)?;
    Ok(chain.jump_probs(start).map(|(j, p)| p * h[j]).sum())
}

/// Poisson tail weight below which the uniformization series is truncated.
const UNIFORMIZATION_TAIL: f64 = 1e-12;
const UNIFORMIZATION_MAX_DEPTH: usize = 50_000_000;

/// `E_start[∫₀^t g(η_s) ds]` by uniformization at rate `1.05·max λ`.
pub fn transient_functional(chain: &Chain, g: &[f64], start: usize, t: f64) -> Result<f64> {
    check_state(chain, start)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput("t must be finite and non-negative".into()));
    }
    if g.len() != chain.len() {
        return Err(Error::InvalidInput("g has wrong length".into()));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let lambda_max = chain.max_holding();
    if lambda_max == 0.0 {
        return Ok(g[start] * t);
    }
    let rate = 1.05 * lambda_max;
    let a = rate * t;
    let depth_bound = (a + 40.0 * a.sqrt() + 100.0).ceil();
    if depth_bound > UNIFORMIZATION_MAX_DEPTH as f64 {
        return Err(Error::UniformizationDepth(depth_bound as usize));
    }

    // π_k = δ_start P^k with P = I + L / rate; weight_k = P(Pois(a) > k) / rate
    let n = chain.len();
    let mut pi = vec![0.0; n];
    pi[start] = 1.0;
    let ln_a = a.ln();
    let mut log_pmf = -a;
    let mut cdf = log_pmf.exp();
    let mut total = 0.0;
    let mut k = 0usize;
    loop {
        let tail = (1.0 - cdf).max(0.0);
        let value: f64 = pi.iter().zip(g).map(|(p, v)| p * v).sum();
        total += tail * value;
        // past the mode, P(X > k) ≤ pmf_k (k+1)/(k+1−a); the cdf itself is
        // too inexact to decide this for large a
        if (k as f64) > a {
            let kf = k as f64;
            if log_pmf.exp() * (kf + 1.0) / (kf + 1.0 - a) < UNIFORMIZATION_TAIL {
                break;
            }
        }
        k += 1;
        if k > depth_bound as usize {
            return Err(Error::UniformizationDepth(k));
        }
        let mut next: Vec<f64> = pi
            .iter()
            .enumerate()
            .map(|(i, p)| p * (1.0 - chain.holding(i) / rate))
            .collect();
        for (i, &p) in pi.iter().enumerate() {
            if p != 0.0 {
                for &(j, r) in chain.out_rates(i) {
                    next[j] += p * r / rate;
                }
            }
        }
        pi = next;
        log_pmf += ln_a - (k as f64).ln();
        cdf += log_pmf.exp();
    }
    Ok(total / rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Chain {
        let mut s = ChainSpec::new(["a", "b"]).unwrap();
        s.add_rate("a", "b", 1.0).unwrap();
        s.add_rate("b", "a", 1.0).unwrap();
        Chain::build(&s).unwrap()
    }

    #[test]
    fn two_state_symmetry() {
        let c = two_state();
        assert_eq!(c.holding(0), 1.0);
        assert_eq!(c.jump_prob(0, 1), 1.0);
        let m = stationary_measure(&c).unwrap();
        assert!((m.mu[0] - 0.5).abs() < 1e-15);
        assert!(m.reversible);
    }

    #[test]
    fn self_loop_rejected() {
        let mut s = ChainSpec::new(["a", "b"]).unwrap();
        assert!(matches!(s.add_rate("a", "a", 1.0), Err(Error::SelfLoop(_))));
    }

    #[test]
    fn zero_holding_rate_rejected() {
        let mut s = ChainSpec::new(["a", "b"]).unwrap();
        s.add_rate("a", "b", 1.0).unwrap();
        assert_eq!(Chain::build(&s).unwrap_err(), Error::ZeroHoldingRate("b".into()));
    }

    #[test]
    fn reducible_chain_rejected_with_classes() {
        let mut s = ChainSpec::new(["a", "b", "c"]).unwrap();
        s.add_rate("a", "b", 1.0).unwrap();
        s.add_rate("b", "a", 1.0).unwrap();
        s.add_rate("c", "a", 1.0).unwrap();
        s.add_rate("a", "c", 0.0).unwrap();
        match Chain::build(&s) {
            Err(Error::NotIrreducible(classes)) => {
                assert_eq!(classes, vec![vec!["a".to_string(), "b".into()], vec!["c".into()]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_rate_rejected() {
        let mut s = ChainSpec::new(["a", "b"]).unwrap();
        assert!(matches!(s.add_rate("a", "b", -1.0), Err(Error::InvalidRate { .. })));
        assert!(matches!(s.add_rate("a", "b", f64::NAN), Err(Error::InvalidRate { .. })));
    }

    #[test]
    fn zero_integrand_gives_zero() {
        let c = two_state();
        let v = expected_additive_until_hitting(&c, &[0.0, 0.0], 0, &StateSet::singleton(1)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn transient_constant_integrand() {
        let c = two_state();
        assert_eq!(transient_functional(&c, &[2.0, 2.0], 0, 0.0).unwrap(), 0.0);
        let v = transient_functional(&c, &[2.0, 2.0], 0, 3.0).unwrap();
        assert!((v - 6.0).abs() < 1e-11, "{v}");
    }

    #[test]
    fn transient_two_state_closed_form() {
        // E_a[∫₀^t 1{a}] = t/2 + (1 − e^{−2t})/4 for unit rates
        let c = two_state();
        for t in [0.1, 1.0, 10.0] {
            let v = transient_functional(&c, &[1.0, 0.0], 0, t).unwrap();
            let exact = t / 2.0 + (1.0 - (-2.0 * t).exp()) / 4.0;
            assert!((v - exact).abs() < 1e-11, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn escape_forced_transition() {
        let c = two_state();
        let p = escape_probability(&c, 0, &StateSet::singleton(0), &StateSet::singleton(1)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn escape_blocked_by_separating_set() {
        // a - b - c path; B = {c} unreachable from a without returning through A = {a, b}
        let mut s = ChainSpec::new(["a", "b", "c"]).unwrap();
        for (x, y) in [("a", "b"), ("b", "a"), ("b", "c"), ("c", "b")] {
            s.add_rate(x, y, 1.0).unwrap();
        }
        let c = Chain::build(&s).unwrap();
        let a = c.set(&["a", "b"]).unwrap();
        let b = c.set(&["c"]).unwrap();
        assert_eq!(escape_probability(&c, 0, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn state_set_algebra() {
        let a = StateSet::new([3, 1, 1, 2]);
        assert_eq!(a.as_slice(), &[1, 2, 3]);
        let b = StateSet::new([2, 5]);
        assert_eq!(a.union(&b).as_slice(), &[1, 2, 3, 5]);
        assert_eq!(a.difference(&b).as_slice(), &[1, 3]);
        assert_eq!(a.complement(5).as_slice(), &[0, 4]);
        assert!(!a.is_disjoint(&b));
    }
}
