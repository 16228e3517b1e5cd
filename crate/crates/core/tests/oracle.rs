//! Library results against a dense linear-algebra reference.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{dense, random_general, random_pair, random_reversible, random_subset, rel, rng};
use metastab::io::load_family;
use metastab::potential::point_capacity;
use metastab::trace::trace_rates_by_elimination;
use metastab::{
    capacity, expected_additive_until_hitting_all, hitting_probability, stationary_measure, trace_by_elimination,
    trace_by_hitting, transient_functional, valley_depth, SetSelector, StateSet, ValleySpec,
};
use rand::Rng;

#[test]
fn stationary_matches_dense() {
    for seed in 0..40 {
        let n = 2 + (seed as usize % 11);
        let chain = random_general(seed, n);
        let mu = stationary_measure(&chain).unwrap();
        let reference = dense::stationary(&chain);
        for s in 0..n {
            assert!(rel(mu.mu[s], reference[s]) < 1e-10, "seed {seed}");
        }
        let (chain, w) = random_reversible(seed, n);
        let mu = stationary_measure(&chain).unwrap();
        assert!(mu.reversible);
        for s in 0..n {
            assert!(rel(mu.mu[s], w[s]) < 1e-10);
        }
    }
}

#[test]
fn hitting_and_capacity_match_dense() {
    for seed in 0..40 {
        let n = 2 + (seed as usize % 11);
        let (chain, _) = random_reversible(100 + seed, n);
        let mu = stationary_measure(&chain).unwrap();
        let (a, b) = random_pair(&mut rng(seed), n);
        let f = hitting_probability(&chain, &a, &b).unwrap();
        let reference = dense::hitting(&chain, &a, &b);
        for s in 0..n {
            assert!((f[s] - reference[s]).abs() < 1e-10);
        }
        let cap = capacity(&chain, &mu, &a, &b).unwrap();
        assert!(rel(cap.cap, dense::capacity(&chain, &mu.mu, &a, &b)) < 1e-10);
        assert!(cap.agreement() < 1e-10);
    }
}

#[test]
fn additive_functional_matches_dense() {
    for seed in 0..30 {
        let n = 2 + (seed as usize % 9);
        let chain = random_general(200 + seed, n);
        let mut r = rng(seed);
        let target = random_subset(&mut r, n);
        let g: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let u = expected_additive_until_hitting_all(&chain, &g, &target).unwrap();
        let reference = dense::additive(&chain, &g, &target);
        let scale = reference.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
        for s in 0..n {
            assert!((u[s] - reference[s]).abs() / scale < 1e-10);
        }
    }
}

#[test]
fn trace_matches_schur_complement() {
    for seed in 0..40 {
        let n = 2 + (seed as usize % 11);
        let chain = random_general(300 + seed, n);
        let f = random_subset(&mut rng(seed), n);
        let reference = dense::trace(&chain, &f);
        let floor = 1e-13 * reference.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for t in [
            trace_by_hitting(&chain, &f).unwrap(),
            trace_by_elimination(&chain, &f).unwrap(),
        ] {
            for (i, x) in f.iter().enumerate() {
                for (j, y) in f.iter().enumerate() {
                    if i != j {
                        let (a, b) = (t.rate(x, y), reference[(i, j)]);
                        assert!(
                            (a - b).abs() <= 1e-10 * a.abs().max(b.abs()) + floor,
                            "seed {seed} {x}->{y}: {} vs {}",
                            a,
                            b
                        );
                    }
                }
            }
        }
        let rows = trace_rates_by_elimination(&chain, &f, None).unwrap();
        assert_eq!(rows.len(), f.len());
    }
}

#[test]
fn point_capacity_matches_brute_force() {
    for seed in 0..30 {
        let n = 3 + (seed as usize % 9);
        let (chain, _) = random_reversible(400 + seed, n);
        let mu = stationary_measure(&chain).unwrap();
        let mut r = rng(seed);
        let w = loop {
            let w = random_subset(&mut r, n);
            if w.len() >= 2 {
                break w;
            }
        };
        let xi = w.as_slice()[r.random_range(0..w.len())];
        let fast = point_capacity(&chain, &mu, &w, xi).unwrap();
        assert!(rel(fast, dense::point_capacity(&chain, &mu.mu, &w, xi)) < 1e-10);
    }
}

#[test]
fn transient_matches_matrix_exponential() {
    for seed in 0..20 {
        let n = 2 + (seed as usize % 7);
        let chain = random_general(500 + seed, n);
        let mut r = rng(seed);
        let g: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        for t in [0.1, 1.0, 10.0] {
            let v = transient_functional(&chain, &g, 0, t).unwrap();
            let reference = dense::transient(&chain, &g, 0, t);
            assert!(
                (v - reference).abs() <= 1e-9 * t.max(1.0),
                "seed {seed} t {t}: {v} vs {reference}"
            );
        }
    }
}

fn ex5(n: f64) -> metastab::Chain {
    load_family("ex5").unwrap().family.chain(n).unwrap()
}

fn valley(w: &[&str], b: &[&str], xi: &str) -> ValleySpec {
    ValleySpec {
        well: SetSelector::new(w.iter().copied()),
        basin: SetSelector::new(b.iter().copied()),
        attractor: xi.into(),
    }
}

fn ex5_cases() -> Vec<ValleySpec> {
    vec![
        valley(&["3"], &["3", "4"], "3"),
        valley(&["5"], &["4", "5"], "5"),
        valley(&["1"], &["1", "2"], "1"),
        valley(&["3", "4", "5"], &["3", "4", "5"], "3"),
        valley(&["3", "4", "5"], &["2", "3", "4", "5"], "3"),
    ]
}

// Reference values for ex5 at N = 10 from the dense solver above.
const EX5_MU: [f64; 5] = [
    0.04543389368468858,
    0.0004543389368468865,
    0.4543389368468878,
    0.04543389368468879,
    0.4543389368468879,
];
const EX5_DEPTHS: [f64; 5] = [
    19.6078431372549,
    20.000000000000004,
    199.99999999999963,
    2100.000000000003,
    4200.000000000011,
];
const EX5_POINT_CAPACITY: f64 = 0.02271694684234439;

#[test]
fn ex5_reference_values() {
    let chain = ex5(10.0);
    let mu = stationary_measure(&chain).unwrap();
    for s in 0..5 {
        assert!(rel(mu.mu[s], EX5_MU[s]) < 1e-10);
    }
    for (v, expected) in ex5_cases().iter().zip(EX5_DEPTHS) {
        let d = valley_depth(&chain, &mu, &v.resolve(&chain).unwrap()).unwrap();
        assert!(rel(d, expected) < 1e-10, "{d} vs {expected}");
    }
    let pc = point_capacity(&chain, &mu, &StateSet::new([2, 3, 4]), 2).unwrap();
    assert!(rel(pc, EX5_POINT_CAPACITY) < 1e-10);
}

#[test]
#[ignore]
fn print_reference_values() {
    let chain = ex5(10.0);
    let mu = dense::stationary(&chain);
    println!("mu = {mu:?}");
    for v in ex5_cases() {
        let r = v.resolve(&chain).unwrap();
        let cap = dense::capacity(&chain, &mu, &r.well, &r.exterior);
        let mass: f64 = r.well.iter().map(|s| mu[s]).sum();
        println!("depth = {:?}", mass / cap);
    }
    let w = StateSet::new([2, 3, 4]);
    println!("point cap = {:?}", dense::point_capacity(&chain, &mu, &w, 2));
}
