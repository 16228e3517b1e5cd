//! Simulation against exact quantities, plus calibration and determinism.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{random_general, random_reversible, rng};
use metastab::io::load_family;
use metastab::sim::{
    empirical_meta_rates, exit_law_experiment, ks_exponential_test, replica_rng, sample_path, sample_path_with,
    PathSample, SimTime, Stop, StopReason,
};
use metastab::trace::extract_trace_path;
use metastab::{hitting_probability, stationary_measure, trace_by_hitting, StateSet};
use rand::Rng;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn draw<R: Rng>(r: &mut R, weights: &[f64]) -> usize {
    let u: f64 = r.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn state_at(path: &PathSample, t: SimTime) -> usize {
    let mut clock = SimTime::ZERO;
    for s in &path.segments {
        if clock + s.duration > t {
            return s.state;
        }
        clock += s.duration;
    }
    path.end_state
}

#[test]
fn occupation_fractions_match_stationary_measure() {
    for seed in 0..3u64 {
        let chain = random_general(seed, 5);
        let mu = stationary_measure(&chain).unwrap();
        let horizon = 50.0 / chain.holding_rates().iter().cloned().fold(f64::INFINITY, f64::min);
        let mut fractions = vec![Vec::new(); 5];
        let mut r = rng(seed);
        for i in 0..400 {
            let start = draw(&mut r, &mu.mu);
            let path = sample_path(&chain, start, &Stop::horizon(horizon), seed, i).unwrap();
            for (s, f) in fractions.iter_mut().enumerate() {
                f.push(path.occupation(&StateSet::singleton(s)).as_secs() / horizon);
            }
        }
        for s in 0..5 {
            let (m, se) = mean_and_se(&fractions[s]);
            assert!(
                (m - mu.mu[s]).abs() <= 3.0 * se,
                "seed {seed} state {s}: {m} vs {}",
                mu.mu[s]
            );
        }
    }
}

#[test]
fn hitting_frequencies_match_potential() {
    for seed in 0..4u64 {
        let (chain, _) = random_reversible(seed, 6);
        let a = StateSet::singleton(0);
        let b = StateSet::singleton(5);
        let f = hitting_probability(&chain, &a, &b).unwrap();
        let stop = Stop::target(a.union(&b));
        let reps = 4000;
        for start in 1..5 {
            let hits = (0..reps)
                .filter(|&i| sample_path(&chain, start, &stop, seed, i).unwrap().end_state == 0)
                .count();
            let p = hits as f64 / reps as f64;
            let se = (f[start] * (1.0 - f[start]) / reps as f64).sqrt();
            assert!(
                (p - f[start]).abs() <= 3.0 * se,
                "seed {seed} start {start}: {p} vs {}",
                f[start]
            );
        }
    }
}

#[test]
fn trace_path_rates_match_trace_chain() {
    let chain = random_general(7, 6);
    let support = StateSet::new([0, 2, 3]);
    let trace = trace_by_hitting(&chain, &support).unwrap();
    let mut counts = [[0u64; 6]; 6];
    let mut time = [0.0f64; 6];
    for i in 0..50 {
        let path = sample_path(&chain, 0, &Stop::horizon(400.0), 3, i).unwrap();
        let t = extract_trace_path(&path, &support).unwrap().path;
        for w in t.segments.windows(2) {
            counts[w[0].state][w[1].state] += 1;
        }
        for s in &t.segments[..t.segments.len() - 1] {
            time[s.state] += s.duration.as_secs();
        }
    }
    for x in support.iter() {
        for y in support.iter().filter(|&y| y != x) {
            let n = counts[x][y] as f64;
            let estimate = n / time[x];
            let se = n.sqrt().max(1.0) / time[x];
            let exact = trace.rate(x, y);
            assert!((estimate - exact).abs() <= 3.0 * se, "{x}->{y}: {estimate} vs {exact}");
        }
    }
}

#[test]
fn trace_path_follows_time_change() {
    let chain = random_general(11, 6);
    let support = StateSet::new([1, 4, 5]);
    let path = sample_path(&chain, 0, &Stop::horizon(100.0), 5, 0).unwrap();
    let trace = extract_trace_path(&path, &support).unwrap();
    assert!(trace.dropped_prefix);
    assert_eq!(trace.path.horizon, path.occupation(&support));
    let mut r = rng(2);
    for _ in 0..500 {
        let t = SimTime((r.random::<f64>() * trace.path.horizon.ticks() as f64) as u128);
        assert_eq!(state_at(&trace.path, t), state_at(&path, path.time_change(&support, t)));
    }
}

#[test]
fn ks_is_calibrated_and_has_power() {
    let sample = |seed: u64, rate: f64| -> Vec<f64> {
        let mut r = replica_rng(seed, 0);
        (0..10_000).map(|_| -(1.0 - r.random::<f64>()).ln() / rate).collect()
    };
    let accepted = (1..=100u64)
        .filter(|&s| ks_exponential_test(&sample(s, 1.0)).unwrap().p_value > 0.01)
        .count();
    assert!(accepted >= 98, "{accepted} of 100");
    for s in 1..=10u64 {
        assert!(ks_exponential_test(&sample(s, 2.0)).unwrap().p_value < 0.01);
    }
}

#[test]
fn paths_are_reproducible() {
    let chain = random_general(3, 8);
    let stop = Stop {
        target: Some(StateSet::singleton(7)),
        horizon: Some(1e3),
    };
    let a = sample_path(&chain, 0, &stop, 42, 9).unwrap();
    assert_eq!(a, sample_path(&chain, 0, &stop, 42, 9).unwrap());
    assert_ne!(a, sample_path(&chain, 0, &stop, 42, 10).unwrap());
    let mut r = replica_rng(42, 9);
    assert_eq!(a, sample_path_with(&chain, 0, &stop, &mut r).unwrap());
    assert!(matches!(a.stop_reason, StopReason::HitTarget | StopReason::Horizon));
    assert_eq!(a.segments.iter().map(|s| s.duration).sum::<SimTime>(), a.horizon);
}

#[test]
fn experiments_do_not_depend_on_thread_count() {
    let loaded = load_family("ex7").unwrap();
    let chain = loaded.family.chain(100.0).unwrap();
    let partition = loaded.partition().unwrap().resolve(&chain).unwrap();
    let valley = loaded.valley().unwrap().resolve(&chain).unwrap();
    let run = || {
        (
            empirical_meta_rates(&chain, &partition, 100.0, 2000.0, 40, 8).unwrap(),
            exit_law_experiment(&chain, &valley, 100.0, 1000, 8, None).unwrap(),
        )
    };
    let parallel = run();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(parallel, single);
}
