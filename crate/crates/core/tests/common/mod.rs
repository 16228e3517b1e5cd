//! Seeded random chains and a dense reference implementation.
#![allow(dead_code)]

use metastab::{Chain, ChainSpec, StateSet};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// Reversible chain: random spanning tree plus extra edges, conductances
/// `c(x,y)` and weights `w`, rates `c/w(x)`. Returns the chain and `w / Σw`.
pub fn random_reversible(seed: u64, n: usize) -> (Chain, Vec<f64>) {
    let mut r = rng(seed);
    let w: Vec<f64> = (0..n).map(|_| r.random_range(-3.0f64..3.0).exp()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[r.random_range(0..k)];
        edges.push((order[k], parent));
    }
    for x in 0..n {
        for y in (x + 1)..n {
            if r.random_bool(0.3) && !edges.iter().any(|&(a, b)| (a, b) == (x, y) || (a, b) == (y, x)) {
                edges.push((x, y));
            }
        }
    }
    let mut spec = ChainSpec::new(labels(n)).unwrap();
    for (x, y) in edges {
        let c = r.random_range(-2.0f64..2.0).exp();
        spec.add_rate_by_index(x, y, c / w[x]).unwrap();
        spec.add_rate_by_index(y, x, c / w[y]).unwrap();
    }
    let total: f64 = w.iter().sum();
    (Chain::build(&spec).unwrap(), w.iter().map(|v| v / total).collect())
}

/// Irreducible, generally non-reversible chain: a directed cycle plus random edges.
pub fn random_general(seed: u64, n: usize) -> Chain {
    let mut r = rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut spec = ChainSpec::new(labels(n)).unwrap();
    for k in 0..n {
        let rate = r.random_range(-2.0f64..2.0).exp();
        spec.add_rate_by_index(order[k], order[(k + 1) % n], rate).unwrap();
    }
    for x in 0..n {
        for y in 0..n {
            if x != y && r.random_bool(0.25) {
                spec.add_rate_by_index(x, y, r.random_range(-2.0f64..2.0).exp())
                    .unwrap();
            }
        }
    }
    Chain::build(&spec).unwrap()
}

/// Random nonempty proper subset.
pub fn random_subset<R: Rng>(r: &mut R, n: usize) -> StateSet {
    loop {
        let s: Vec<usize> = (0..n).filter(|_| r.random_bool(0.5)).collect();
        if !s.is_empty() && s.len() < n {
            return StateSet::new(s);
        }
    }
}

/// Two disjoint nonempty sets.
pub fn random_pair<R: Rng>(r: &mut R, n: usize) -> (StateSet, StateSet) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    let ka = r.random_range(1..n);
    let kb = r.random_range(1..=n - ka);
    (
        StateSet::new(idx[..ka].iter().copied()),
        StateSet::new(idx[ka..ka + kb].iter().copied()),
    )
}

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Dense generator matrix.
pub fn generator(chain: &Chain) -> DMatrix<f64> {
    let n = chain.len();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for &(j, r) in chain.out_rates(i) {
            l[(i, j)] += r;
            l[(i, i)] -= r;
        }
    }
    l
}

pub mod dense {
    use super::*;

    /// μL = 0, Σμ = 1: the last balance equation is replaced by normalization.
    pub fn stationary(chain: &Chain) -> Vec<f64> {
        let n = chain.len();
        let mut a = generator(chain).transpose();
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    fn interior_solve(chain: &Chain, interior: &[usize], rhs: &[f64]) -> Vec<f64> {
        let l = generator(chain);
        let k = interior.len();
        if k == 0 {
            return Vec::new();
        }
        let a = DMatrix::from_fn(k, k, |i, j| -l[(interior[i], interior[j])]);
        let b = DVector::from_fn(k, |i, _| rhs[i]);
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    /// `P_η[T_A < T_B]`.
    pub fn hitting(chain: &Chain, a: &StateSet, b: &StateSet) -> Vec<f64> {
        let n = chain.len();
        let l = generator(chain);
        let interior: Vec<usize> = (0..n).filter(|&s| !a.contains(s) && !b.contains(s)).collect();
        let rhs: Vec<f64> = interior.iter().map(|&s| a.iter().map(|t| l[(s, t)]).sum()).collect();
        let u = interior_solve(chain, &interior, &rhs);
        let mut f: Vec<f64> = (0..n).map(|s| if a.contains(s) { 1.0 } else { 0.0 }).collect();
        for (k, &s) in interior.iter().enumerate() {
            f[s] = u[k];
        }
        f
    }

    pub fn dirichlet(chain: &Chain, mu: &[f64], f: &[f64]) -> f64 {
        let mut d = 0.0;
        for i in 0..chain.len() {
            for &(j, r) in chain.out_rates(i) {
                d += mu[i] * r * (f[j] - f[i]).powi(2);
            }
        }
        0.5 * d
    }

    pub fn capacity(chain: &Chain, mu: &[f64], a: &StateSet, b: &StateSet) -> f64 {
        dirichlet(chain, mu, &hitting(chain, a, b))
    }

    /// `E_η[∫₀^{T_A} g]` for every η.
    pub fn additive(chain: &Chain, g: &[f64], target: &StateSet) -> Vec<f64> {
        let n = chain.len();
        let interior: Vec<usize> = (0..n).filter(|&s| !target.contains(s)).collect();
        let rhs: Vec<f64> = interior.iter().map(|&s| g[s]).collect();
        let u = interior_solve(chain, &interior, &rhs);
        let mut out = vec![0.0; n];
        for (k, &s) in interior.iter().enumerate() {
            out[s] = u[k];
        }
        out
    }

    /// Trace rates by Schur complement: off-diagonal part of
    /// `L_FF + L_{F,Fc} (−L_{Fc,Fc})⁻¹ L_{Fc,F}`, indexed locally.
    pub fn trace(chain: &Chain, f: &StateSet) -> DMatrix<f64> {
        let n = chain.len();
        let l = generator(chain);
        let fi: Vec<usize> = f.iter().collect();
        let ci: Vec<usize> = (0..n).filter(|&s| !f.contains(s)).collect();
        let (kf, kc) = (fi.len(), ci.len());
        let lff = DMatrix::from_fn(kf, kf, |i, j| l[(fi[i], fi[j])]);
        let mut s = lff;
        if kc > 0 {
            let lfc = DMatrix::from_fn(kf, kc, |i, j| l[(fi[i], ci[j])]);
            let lcf = DMatrix::from_fn(kc, kf, |i, j| l[(ci[i], fi[j])]);
            let lcc = DMatrix::from_fn(kc, kc, |i, j| -l[(ci[i], ci[j])]);
            let x = lcc.lu().solve(&lcf).unwrap();
            s += lfc * x;
        }
        for i in 0..kf {
            s[(i, i)] = 0.0;
        }
        s
    }

    /// `min_{η∈W∖{ξ}} Cap({η},{ξ})` by one capacity solve per η.
    pub fn point_capacity(chain: &Chain, mu: &[f64], w: &StateSet, xi: usize) -> f64 {
        w.iter()
            .filter(|&s| s != xi)
            .map(|eta| capacity(chain, mu, &StateSet::singleton(eta), &StateSet::singleton(xi)))
            .fold(f64::INFINITY, f64::min)
    }

    /// `E_η[∫₀^t g]` from the exponential of the augmented generator `[[L, g], [0, 0]]`.
    pub fn transient(chain: &Chain, g: &[f64], start: usize, t: f64) -> f64 {
        let n = chain.len();
        let l = generator(chain);
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = t * l[(i, j)];
            }
            m[(i, n)] = t * g[i];
        }
        m.exp()[(start, n)]
    }
}
