//! Potential theory for reversible chains: Dirichlet form, equilibrium
//! potentials, capacities, mean set rates and the identities linking them.

use serde::{Deserialize, Serialize};

use crate::chain::{
    expected_additive_until_hitting_all, hitting_probability, solve_interior, Chain, StateSet, StationaryMeasure,
};
use crate::error::{Error, Result};
use crate::trace::{h_trace, trace_by_hitting, trace_stationary, TraceChain};

/// `D(f) = ½ Σ μ(η) R(η,ξ) (f(ξ) − f(η))²`.
pub fn dirichlet_form(chain: &Chain, mu: &StationaryMeasure, f: &[f64]) -> Result<f64> {
    mu.require_reversible()?;
    if f.len() != chain.len() {
        return Err(Error::InvalidInput("f has wrong length".into()));
    }
    let mut total = 0.0;
    for i in 0..chain.len() {
        for &(j, r) in chain.out_rates(i) {
            let d = f[j] - f[i];
            total += mu.mu[i] * r * d * d;
        }
    }
    Ok(0.5 * total)
}

fn check_pair(a: &StateSet, b: &StateSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySupport);
    }
    if !a.is_disjoint(b) {
        return Err(Error::OverlappingSets);
    }
    Ok(())
}

/// `f_AB(η) = P_η[τ_A < τ_B]`: 1 on A, 0 on B, harmonic elsewhere.
pub fn equilibrium_potential(chain: &Chain, _mu: &StationaryMeasure, a: &StateSet, b: &StateSet) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    let f = hitting_probability(chain, a, b)?;
    debug_assert!(f.iter().all(|v| (-1e-10..=1.0 + 1e-10).contains(v)));
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub a: StateSet,
    pub b: StateSet,
    /// Dirichlet form of the equilibrium potential.
    pub cap: f64,
    pub potential: Vec<f64>,
    /// `Σ_{η∈A} M(η) P_η[T⁺_B < T⁺_A]`.
    pub escape_value: f64,
    /// Max of `|L f_AB|` off `A ∪ B`, relative to the largest holding rate.
    pub residual: f64,
}

impl CapacityReport {
    /// Relative disagreement of the two capacity computations.
    pub fn agreement(&self) -> f64 {
        (self.cap - self.escape_value).abs() / self.cap.abs().max(self.escape_value.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Capacity by the Dirichlet form of `f_AB`, cross-checked by the escape sum.
pub fn capacity(chain: &Chain, mu: &StationaryMeasure, a: &StateSet, b: &StateSet) -> Result<CapacityReport> {
    mu.require_reversible()?;
    check_pair(a, b)?;
    let potential = equilibrium_potential(chain, mu, a, b)?;
    let cap = dirichlet_form(chain, mu, &potential)?;

    // escape race from A: h = 1 on B, 0 on A
    let h = hitting_probability(chain, b, a)?;
    let escape_value: f64 = a
        .iter()
        .map(|s| mu.mu[s] * chain.out_rates(s).iter().map(|&(j, r)| r * h[j]).sum::<f64>())
        .sum();

    let boundary = a.union(b);
    let lf = chain.generator_apply(&potential);
    let scale = chain.max_holding().max(f64::MIN_POSITIVE);
    let residual = (0..chain.len())
        .filter(|s| !boundary.contains(*s))
        .map(|s| lf[s].abs() / scale)
        .fold(0.0, f64::max);
    Ok(CapacityReport {
        a: a.clone(),
        b: b.clone(),
        cap,
        potential,
        escape_value,
        residual,
    })
}

/// `Cap(A,B)`, taken as 0 when either set is empty.
pub fn capacity_value(chain: &Chain, mu: &StationaryMeasure, a: &StateSet, b: &StateSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        mu.require_reversible()?;
        return Ok(0.0);
    }
    Ok(capacity(chain, mu, a, b)?.cap)
}

/// Right-hand sides per batched solve in [`point_capacity`].
const POINT_BATCH: usize = 128;

/// `min_{η∈W∖{ξ}} Cap({η},{ξ})`.
///
/// Uses `Cap(η,ξ) = μ(η) / G(η,η)` where `G(η,·)` is the expected time spent
/// at η before hitting ξ, so a single factorization serves every η.
pub fn point_capacity(chain: &Chain, mu: &StationaryMeasure, w: &StateSet, xi: usize) -> Result<f64> {
    mu.require_reversible()?;
    if !w.contains(xi) {
        return Err(Error::InvalidInput("attractor must lie in the well".into()));
    }
    if w.len() < 2 {
        return Err(Error::SingletonWell);
    }
    let n = chain.len();
    let interior = StateSet::singleton(xi).complement(n);
    let candidates: Vec<usize> = w.iter().filter(|&s| s != xi).collect();
    let mut best = f64::INFINITY;
    for chunk in candidates.chunks(POINT_BATCH) {
        let rhs: Vec<Vec<f64>> = chunk
            .iter()
            .map(|&eta| {
                let mut b = vec![0.0; n];
                b[eta] = 1.0;
                b
            })
            .collect();
        let green = solve_interior(chain, &interior, &rhs)?;
        for (&eta, g) in chunk.iter().zip(&green) {
            if !(g[eta] > 0.0) {
                return Err(Error::SolverFailure("non-positive occupation time".into()));
            }
            best = best.min(mu.mu[eta] / g[eta]);
        }
    }
    Ok(best)
}

/// `r_F(A,B) = μ(A)⁻¹ Σ_{η∈A} μ(η) Σ_{ξ∈B} R^F(η,ξ)`; `mu` is the base measure.
pub fn mean_set_rate(trace: &TraceChain, mu: &StationaryMeasure, a: &StateSet, b: &StateSet) -> Result<f64> {
    if !a.is_disjoint(b) {
        return Err(Error::OverlappingSets);
    }
    if a.is_empty() {
        return Err(Error::EmptySupport);
    }
    let la = trace.local_set(a)?;
    let lb = trace.local_set(b)?;
    let tc = trace.chain();
    let mut flux = 0.0;
    let mut mass = 0.0;
    for (i, s) in la.iter().zip(a.iter()) {
        mass += mu.mu[s];
        flux += mu.mu[s]
            * tc.out_rates(i)
                .iter()
                .filter(|&&(j, _)| lb.contains(j))
                .map(|&(_, r)| r)
                .sum::<f64>();
    }
    Ok(flux / mass)
}

/// Two sides of an identity and their relative disagreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs|` over the largest magnitude among the terms involved.
    pub residual: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        let scale = scale.max(lhs.abs()).max(rhs.abs());
        let residual = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
        Self { lhs, rhs, residual }
    }
}

/// `μ(A) r_F(A,B)` against `½{Cap(A,F∖A) + Cap(B,F∖B) − Cap(A∪B,F∖(A∪B))}`.
pub fn three_set_rate_identity(
    chain: &Chain,
    mu: &StationaryMeasure,
    f: &StateSet,
    a: &StateSet,
    b: &StateSet,
) -> Result<IdentityCheck> {
    if !a.is_disjoint(b) {
        return Err(Error::OverlappingSets);
    }
    if !a.is_subset(f) || !b.is_subset(f) {
        return Err(Error::InvalidInput("A and B must lie in F".into()));
    }
    let trace = trace_by_hitting(chain, f)?;
    let lhs = mu.mass(a) * mean_set_rate(&trace, mu, a, b)?;
    let ab = a.union(b);
    let c1 = capacity_value(chain, mu, a, &f.difference(a))?;
    let c2 = capacity_value(chain, mu, b, &f.difference(b))?;
    let c3 = capacity_value(chain, mu, &ab, &f.difference(&ab))?;
    let rhs = 0.5 * (c1 + c2 - c3);
    Ok(IdentityCheck::new(lhs, rhs, c1.max(c2).max(c3)))
}

/// `⟨h⟩_μ Cap_h(A,B)` on the h-trace against `Cap(A,B)` on the base chain.
pub fn h_capacity_scaling(
    chain: &Chain,
    mu: &StationaryMeasure,
    h: &[f64],
    a: &StateSet,
    b: &StateSet,
) -> Result<IdentityCheck> {
    check_pair(a, b)?;
    let trace = h_trace(chain, h)?;
    let la = trace.local_set(a)?;
    let lb = trace.local_set(b)?;
    let nu = trace_stationary(&trace, mu)?;
    let cap_h = capacity(trace.chain(), &nu, &la, &lb)?.cap;
    let mean_h = mu.expectation(h);
    let cap = capacity(chain, mu, a, b)?.cap;
    Ok(IdentityCheck::new(mean_h * cap_h, cap, 0.0))
}

/// `E_ν[∫₀^{T_B} g] = ⟨g, f_AB⟩_μ / Cap(A,B)` with
/// `ν(η) = M(η) P_η[T⁺_B < T⁺_A] / Cap(A,B)` on A. The left side mixes
/// direct solves of the additive functional.
pub fn hitting_integral_formula(
    chain: &Chain,
    mu: &StationaryMeasure,
    a: &StateSet,
    b: &StateSet,
    g: &[f64],
) -> Result<IdentityCheck> {
    let report = capacity(chain, mu, a, b)?;
    if g.len() != chain.len() {
        return Err(Error::InvalidInput("g has wrong length".into()));
    }
    let weighted: f64 = (0..chain.len()).map(|s| mu.mu[s] * g[s] * report.potential[s]).sum();
    let rhs = weighted / report.cap;

    let u = expected_additive_until_hitting_all(chain, g, b)?;
    let h = hitting_probability(chain, b, a)?;
    let lhs: f64 = a
        .iter()
        .map(|s| {
            let escape: f64 = chain.out_rates(s).iter().map(|&(j, r)| r * h[j]).sum();
            mu.mu[s] * escape * u[s]
        })
        .sum::<f64>()
        / report.cap;
    let scale = (0..chain.len()).map(|s| mu.mu[s] * g[s].abs()).sum::<f64>() / report.cap;
    Ok(IdentityCheck::new(lhs, rhs, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{stationary_measure, ChainSpec};

    fn two_state() -> (Chain, StationaryMeasure) {
        let mut s = ChainSpec::new(["a", "b"]).unwrap();
        s.add_rate("a", "b", 1.0).unwrap();
        s.add_rate("b", "a", 1.0).unwrap();
        let c = Chain::build(&s).unwrap();
        let m = stationary_measure(&c).unwrap();
        (c, m)
    }

    #[test]
    fn two_state_dirichlet() {
        let (c, m) = two_state();
        assert!((dirichlet_form(&c, &m, &[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(dirichlet_form(&c, &m, &[3.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn complement_potential_is_indicator() {
        let (c, m) = two_state();
        let f = equilibrium_potential(&c, &m, &StateSet::singleton(0), &StateSet::singleton(1)).unwrap();
        assert_eq!(f, vec![1.0, 0.0]);
    }

    #[test]
    fn overlapping_sets_rejected() {
        let (c, m) = two_state();
        let a = StateSet::new([0, 1]);
        assert_eq!(
            capacity(&c, &m, &a, &StateSet::singleton(1)).unwrap_err(),
            Error::OverlappingSets
        );
    }

    #[test]
    fn singleton_well_has_no_point_capacity() {
        let (c, m) = two_state();
        assert_eq!(
            point_capacity(&c, &m, &StateSet::singleton(0), 0).unwrap_err(),
            Error::SingletonWell
        );
        let pc = point_capacity(&c, &m, &StateSet::new([0, 1]), 0).unwrap();
        let direct = capacity(&c, &m, &StateSet::singleton(1), &StateSet::singleton(0))
            .unwrap()
            .cap;
        assert!((pc - direct).abs() < 1e-15);
    }

    #[test]
    fn empty_set_capacity_is_zero() {
        let (c, m) = two_state();
        assert_eq!(
            capacity_value(&c, &m, &StateSet::singleton(0), &StateSet::empty()).unwrap(),
            0.0
        );
    }
}
