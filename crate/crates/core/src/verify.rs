//! Canned checks of the builtin fixtures against their known asymptotics.

use serde::{Deserialize, Serialize};

use crate::chain::{stationary_measure_with, Tolerances};
use crate::error::{Error, Result};
use crate::io::{load_family, FamilyDefinition, LoadedFamily};
use crate::meta::{tunneling_analysis, valley_depth, SetSelector, ValleySpec};
use crate::sim::{empirical_meta_rates, exit_law_experiment, ExitLawStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: String,
    pub passed: bool,
}

impl Check {
    fn within(name: &str, value: f64, lo: f64, hi: f64) -> Check {
        Check {
            name: name.into(),
            value,
            expected: format!("[{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }

    fn at_most(name: &str, value: f64, hi: f64) -> Check {
        Check {
            name: name.into(),
            value,
            expected: format!("<= {hi}"),
            passed: value <= hi,
        }
    }

    fn at_least(name: &str, value: f64, lo: f64) -> Check {
        Check {
            name: name.into(),
            value,
            expected: format!(">= {lo}"),
            passed: value >= lo,
        }
    }

    fn flag(name: &str, ok: bool, expected: &str) -> Check {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            expected: expected.into(),
            passed: ok,
        }
    }
}

/// Options for the simulation-based checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub reps: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            reps: 10_000,
            seed: 1,
            tolerances: Tolerances::default(),
        }
    }
}

fn valley(labels: (&[&str], &[&str], &str)) -> ValleySpec {
    ValleySpec {
        well: SetSelector::new(labels.0.iter().copied()),
        basin: SetSelector::new(labels.1.iter().copied()),
        attractor: labels.2.into(),
    }
}

fn depth_at(loaded: &LoadedFamily, spec: &ValleySpec, n: f64, tol: &Tolerances) -> Result<f64> {
    let chain = loaded.family.chain(n)?;
    let mu = stationary_measure_with(&chain, tol)?;
    valley_depth(&chain, &mu, &spec.resolve(&chain)?)
}

fn exit_checks(loaded: &LoadedFamily, n: f64, start: &str, opts: &VerifyOptions) -> Result<ExitLawStats> {
    let chain = loaded.family.chain_for_simulation(n)?;
    let spec = loaded
        .valley()
        .ok_or_else(|| Error::InvalidInput("family declares no valley".into()))?;
    let v = spec.resolve(&chain)?;
    let theta = loaded
        .theta()
        .ok_or_else(|| Error::InvalidInput("family declares no theta".into()))?
        .eval(n);
    exit_law_experiment(&chain, &v, theta, opts.reps, opts.seed, Some(chain.index_of(start)?))
}

/// Runs the checks for one builtin; returns them all, passing or not.
pub fn verify_example(name: &str, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let loaded = load_family(name)?;
    let tol = &opts.tolerances;
    let mut checks = Vec::new();
    match name {
        "ex1" => {
            let stats = exit_checks(&loaded, 100.0, "-1", opts)?;
            checks.push(Check::within(
                "mean annulus occupation / theta",
                stats.mean_annulus_occupation,
                0.23,
                0.27,
            ));
            checks.push(Check::at_least("exit-time KS p-value", stats.ks.p_value, 0.01));
        }
        "ex2" => {
            let wide = valley((&["-1"], &["-1", "0"], "-1"));
            let narrow = valley((&["-1"], &["-1"], "-1"));
            checks.push(Check::within(
                "depth of ({-1},{-1,0}) at N=1000",
                depth_at(&loaded, &wide, 1000.0, tol)?,
                2.0 * 0.995,
                2.0 * 1.005,
            ));
            let d = depth_at(&loaded, &narrow, 1000.0, tol)?;
            checks.push(Check {
                name: "depth of ({-1},{-1})".into(),
                value: d,
                expected: "1".into(),
                passed: d == 1.0,
            });
        }
        "ex3" | "torus2" => {
            let report = tunneling_analysis(
                &loaded.family,
                loaded.partition().expect("builtin partition"),
                &loaded.time_scale(),
                tol,
            )?;
            for p in &report.points {
                let scaled = p.theta * p.rates[0][1];
                checks.push(Check::within(
                    &format!("theta r(1,2) at N={}", p.n),
                    scaled,
                    1.0 - 1e-8,
                    1.0 + 1e-8,
                ));
            }
        }
        "ex4" => {
            let report = tunneling_analysis(
                &loaded.family,
                loaded.partition().expect("builtin partition"),
                &loaded.time_scale(),
                tol,
            )?;
            checks.push(Check::within("r(1,2)", report.limit_rates[0][1], 0.99, 1.01));
            checks.push(Check::at_most("r(2,1)", report.limit_rates[1][0], 1e-4));
            checks.push(Check::flag(
                "well 2 absorbing",
                report.absorbing == vec![2],
                "absorbing = {2}",
            ));
        }
        "ex5" => {
            let n: f64 = 1000.0;
            let cases: [(&[&str], &[&str], &str, f64); 5] = [
                (&["3"], &["3", "4"], "3", 2.0 * n),
                (&["5"], &["4", "5"], "5", 2.0 * n),
                (&["1"], &["1", "2"], "1", 2.0 * n * n),
                (&["3", "4", "5"], &["3", "4", "5"], "3", 2.0 * n.powi(3)),
                (&["3", "4", "5"], &["2", "3", "4", "5"], "3", 4.0 * n.powi(3)),
            ];
            for (w, b, xi, expected) in cases {
                let d = depth_at(&loaded, &valley((w, b, xi)), n, tol)?;
                checks.push(Check::within(
                    &format!("depth ({{{}}},{{{}}}) / {expected:e}", w.join(","), b.join(",")),
                    d / expected,
                    0.99,
                    1.01,
                ));
            }
            let report = tunneling_analysis(
                &loaded.family,
                loaded.partition().expect("builtin partition"),
                &loaded.time_scale(),
                tol,
            )?;
            checks.push(Check::within("r(1,2)", report.limit_rates[0][1], 0.495, 0.505));
            checks.push(Check::within("r(2,1)", report.limit_rates[1][0], 0.495, 0.505));
            for c in report.conditions.iter().filter(|c| c.name == "H2") {
                let exponent = c.assessment.fit.map_or(f64::MAX, |f| f.exponent);
                checks.push(Check::at_most(
                    &format!("H2 exponent, well {}", c.well.unwrap_or(0)),
                    exponent,
                    -0.9,
                ));
            }
        }
        "ex6" => {
            let stats = exit_checks(&loaded, 100.0, "1", opts)?;
            checks.push(Check::within(
                "mean exit time / 2",
                stats.mean_normalized_exit_time,
                0.97,
                1.03,
            ));
            checks.push(Check::at_least("exit-time KS p-value", stats.ks.p_value, 0.01));
        }
        "ex7" => {
            let report = tunneling_analysis(
                &loaded.family,
                loaded.partition().expect("builtin partition"),
                &loaded.time_scale(),
                tol,
            )?;
            let r = &report.limit_rates;
            for (x, y) in [(0, 1), (1, 2), (2, 1)] {
                checks.push(Check::within(&format!("r({},{})", x + 1, y + 1), r[x][y], 0.495, 0.505));
            }
            for (x, y) in [(0, 2), (1, 0), (2, 0)] {
                checks.push(Check::at_most(&format!("r({},{})", x + 1, y + 1), r[x][y], 1e-4));
            }
            checks.push(Check::flag(
                "well 1 inaccessible",
                report.inaccessible == vec![1],
                "inaccessible = {1}",
            ));

            let n = 1000.0;
            let chain = loaded.family.chain(n)?;
            let partition = loaded.partition().expect("builtin partition").resolve(&chain)?;
            let est = empirical_meta_rates(&chain, &partition, n, 50.0 * n, opts.reps.min(1000), opts.seed)?;
            for x in 0..3 {
                for y in 0..3 {
                    if x == y {
                        continue;
                    }
                    let z = (est.rates[x][y] - r[x][y]).abs();
                    let se = est.std_errors[x][y];
                    checks.push(Check {
                        name: format!("empirical r({},{}) within 3 standard errors", x + 1, y + 1),
                        value: est.rates[x][y],
                        expected: format!("{} ± {}", r[x][y], 3.0 * se),
                        passed: z <= 3.0 * se,
                    });
                }
            }
        }
        "ex8" => {
            let stats = exit_checks(&loaded, 100.0, "2", opts)?;
            checks.push(Check::at_most(
                "attractor-first frequency from 2",
                stats.attractor_first_frequency,
                0.02,
            ));
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "no canned checks for `{other}`; builtins are {:?}",
                FamilyDefinition::builtin_names()
            )))
        }
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ex2_depths_pass() {
        let checks = verify_example("ex2", &VerifyOptions::default()).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn unknown_example_rejected() {
        assert!(verify_example("ex9", &VerifyOptions::default()).is_err());
    }
}
