//! Family definition files and builtin fixtures.
//!
//! A definition is either a builtin (`builtin = "ex5"`, optionally with
//! overrides) or an inline template with states and rate expressions in N.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::fit::default_grid;
use crate::meta::{ChainFamily, MetaPartition, SetSelector, TimeScale, ValleySpec};

/// Default cap on the torus state count `2 L^d`.
pub const TORUS_MAX_STATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateDef {
    pub from: String,
    pub to: String,
    pub rate: Expr,
}

/// Parameters of the two-torus builtin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusParams {
    #[serde(default = "default_dimension")]
    pub d: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_states: Option<usize>,
}

fn default_dimension() -> u32 {
    1
}

impl Default for TorusParams {
    fn default() -> Self {
        Self { d: 1, max_states: None }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDefinition {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub simulation_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    /// Time scale θ_N; for the torus it is also the coupling time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Expr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<TorusParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valley: Option<ValleySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<MetaPartition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<RateDef>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl FamilyDefinition {
    pub fn from_toml_str(text: &str) -> Result<FamilyDefinition> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize family: {e}")))
    }

    /// Builtin fixture by name (`ex1`…`ex8`, `torus2`).
    pub fn builtin(name: &str) -> Result<FamilyDefinition> {
        let text = match name {
            "ex1" => EX1,
            "ex2" => EX2,
            "ex4" => EX4,
            "ex5" => EX5,
            "ex6" => EX6,
            "ex7" => EX7,
            "ex8" => EX8,
            "ex3" | "torus2" => return Ok(torus_definition(name, TorusParams::default())),
            _ => return Err(Error::InvalidInput(format!("unknown builtin family `{name}`"))),
        };
        let mut def = Self::from_toml_str(text)?;
        def.builtin = Some(name.to_string());
        Ok(def)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["ex1", "ex2", "ex3", "ex4", "ex5", "ex6", "ex7", "ex8", "torus2"]
    }

    /// Fills a builtin reference with the fixture's defaults; fields given
    /// explicitly take precedence.
    pub fn expand(&self) -> Result<FamilyDefinition> {
        let Some(name) = &self.builtin else {
            return Ok(self.clone());
        };
        let mut base = Self::builtin(name)?;
        // an expanded builtin carries the fixture's own states and rates
        let declares = !self.states.is_empty() || !self.rates.is_empty();
        if declares && (self.states != base.states || self.rates != base.rates) {
            return Err(Error::InvalidInput(
                "a builtin family cannot redefine states or rates".into(),
            ));
        }
        if is_torus(name) {
            let params = self.params.clone().unwrap_or_default();
            base = torus_definition(name, params);
        } else if self.params.is_some() {
            return Err(Error::InvalidInput(format!("builtin `{name}` takes no parameters")));
        }
        base.name = self.name.clone();
        base.simulation_only |= self.simulation_only;
        if self.grid.is_some() {
            base.grid = self.grid.clone();
        }
        if self.theta.is_some() {
            base.theta = self.theta.clone();
        }
        if self.valley.is_some() {
            base.valley = self.valley.clone();
        }
        if self.partition.is_some() {
            base.partition = self.partition.clone();
        }
        Ok(base)
    }

    /// Expands, validates on every grid point and builds the family.
    pub fn load(&self) -> Result<LoadedFamily> {
        let def = self.expand()?;
        let grid = def.grid.clone().unwrap_or_else(default_grid);
        if grid.is_empty() || grid.iter().any(|n| !(*n > 0.0) || !n.is_finite()) {
            return Err(Error::InvalidInput("grid values must be positive and finite".into()));
        }
        let family = match def.builtin.as_deref() {
            Some(name) if is_torus(name) => {
                let params = def.params.clone().unwrap_or_default();
                let theta = def
                    .theta
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("torus family needs a theta expression".into()))?;
                torus_family(&def.name, params, theta, grid.clone())?
            }
            _ => template_family(&def, grid.clone())?,
        }
        .simulation_only(def.simulation_only);

        for &n in &grid {
            if let Some(theta) = &def.theta {
                let t = theta.eval(n);
                if !(t > 0.0) || !t.is_finite() {
                    return Err(Error::InvalidInput(format!("theta `{theta}` is not positive at N={n}")));
                }
            }
        }
        // declared sets must name declared states
        let spec = family.spec(grid[0])?;
        if let Some(v) = &def.valley {
            v.resolve_spec(&spec)?;
        }
        if let Some(p) = &def.partition {
            p.resolve_spec(&spec)?;
        }
        Ok(LoadedFamily {
            definition: def,
            family,
        })
    }
}

/// A validated family with its declared valley, partition and time scale.
#[derive(Debug, Clone)]
pub struct LoadedFamily {
    pub definition: FamilyDefinition,
    pub family: ChainFamily,
}

impl LoadedFamily {
    pub fn valley(&self) -> Option<&ValleySpec> {
        self.definition.valley.as_ref()
    }

    pub fn partition(&self) -> Option<&MetaPartition> {
        self.definition.partition.as_ref()
    }

    pub fn theta(&self) -> Option<&Expr> {
        self.definition.theta.as_ref()
    }

    pub fn time_scale(&self) -> TimeScale {
        match self.theta() {
            Some(e) => {
                let e = e.clone();
                TimeScale::given(e.source().to_string(), move |n| Ok(e.eval(n)))
            }
            None => TimeScale::Auto,
        }
    }
}

/// Loads a builtin by name or a definition file by path.
pub fn load_family(name_or_path: &str) -> Result<LoadedFamily> {
    if FamilyDefinition::builtin_names().contains(&name_or_path) {
        return FamilyDefinition::builtin(name_or_path)?.load();
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "`{name_or_path}` is neither a builtin family {:?} nor an existing file",
            FamilyDefinition::builtin_names()
        )));
    }
    load_family_file(path)
}

pub fn load_family_file(path: &Path) -> Result<LoadedFamily> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    FamilyDefinition::from_toml_str(&text)?.load()
}

fn template_family(def: &FamilyDefinition, grid: Vec<f64>) -> Result<ChainFamily> {
    if def.states.is_empty() {
        return Err(Error::InvalidInput("a template family needs states".into()));
    }
    // structural checks once: duplicate labels, unknown endpoints, self-loops
    let mut probe = ChainSpec::new(def.states.iter().cloned())?;
    for r in &def.rates {
        probe.add_rate(&r.from, &r.to, 0.0)?;
    }
    let states = def.states.clone();
    let rates = def.rates.clone();
    let generator = move |n: f64| -> Result<ChainSpec> {
        let mut spec = ChainSpec::new(states.iter().cloned())?;
        for r in &rates {
            let v = r.rate.eval(n);
            if v < 0.0 {
                return Err(Error::NegativeRate {
                    n,
                    edge: format!("{} -> {} = `{}`", r.from, r.to, r.rate),
                });
            }
            spec.add_rate(&r.from, &r.to, v)?;
        }
        Ok(spec)
    };
    for &n in &grid {
        generator(n)?;
    }
    Ok(ChainFamily::new(def.name.clone(), grid, generator))
}

fn is_torus(name: &str) -> bool {
    name == "torus2" || name == "ex3"
}

/// `x1.x2…|±` for a torus site.
pub fn torus_label(coords: &[usize], sheet: i8) -> String {
    let xs: Vec<String> = coords.iter().map(usize::to_string).collect();
    format!("{}|{}", xs.join("."), if sheet > 0 { '+' } else { '-' })
}

fn torus_default_grid(d: u32) -> Vec<f64> {
    match d {
        1 => vec![8.0, 16.0, 32.0, 64.0, 128.0],
        2 => vec![4.0, 6.0, 8.0, 12.0, 16.0],
        _ => vec![3.0, 4.0, 5.0, 6.0, 8.0],
    }
}

fn torus_definition(name: &str, params: TorusParams) -> FamilyDefinition {
    let d = params.d;
    let origin = vec![0; d.max(1) as usize];
    FamilyDefinition {
        name: name.to_string(),
        builtin: Some(name.to_string()),
        simulation_only: false,
        grid: Some(torus_default_grid(d)),
        theta: Some(Expr::parse("N^3").expect("valid expression")),
        states: Vec::new(),
        params: Some(params),
        valley: Some(ValleySpec {
            well: SetSelector::new(["*|+"]),
            basin: SetSelector::new(["*|+"]),
            attractor: torus_label(&origin, 1),
        }),
        partition: Some(MetaPartition {
            wells: vec![SetSelector::new(["*|+"]), SetSelector::new(["*|-"])],
            attractors: vec![torus_label(&origin, 1), torus_label(&origin, -1)],
        }),
        rates: Vec::new(),
    }
}

fn torus_family(name: &str, params: TorusParams, theta: Expr, grid: Vec<f64>) -> Result<ChainFamily> {
    let d = params.d;
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidInput(format!(
            "torus dimension must be 1, 2 or 3, got {d}"
        )));
    }
    let cap = params.max_states.unwrap_or(TORUS_MAX_STATES);
    for &n in &grid {
        if n.fract() != 0.0 || n < 1.0 {
            return Err(Error::InvalidInput(format!(
                "torus side must be a positive integer, got {n}"
            )));
        }
        let count = 2.0 * n.powi(d as i32);
        if count > cap as f64 {
            return Err(Error::InvalidInput(format!(
                "torus with L={n}, d={d} has {count} states, above the cap {cap}"
            )));
        }
    }
    let generator = move |n: f64| -> Result<ChainSpec> {
        let side = n as usize;
        let dim = d as usize;
        let sites = side.pow(d);
        let coords = |mut k: usize| {
            let mut c = vec![0; dim];
            for slot in c.iter_mut() {
                *slot = k % side;
                k /= side;
            }
            c
        };
        let index = |c: &[usize]| c.iter().rev().fold(0, |acc, &x| acc * side + x);
        let mut labels = Vec::with_capacity(2 * sites);
        for sheet in [1i8, -1] {
            for k in 0..sites {
                labels.push(torus_label(&coords(k), sheet));
            }
        }
        let mut spec = ChainSpec::new(labels)?;
        let step = 1.0 / (2.0 * dim as f64);
        let t = theta.eval(n);
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NegativeRate {
                n,
                edge: format!("sheet coupling 1/({theta})"),
            });
        }
        for sheet in 0..2 {
            let offset = sheet * sites;
            for k in 0..sites {
                let c = coords(k);
                let mut neighbours = Vec::with_capacity(2 * dim);
                for axis in 0..dim {
                    for delta in [1, side.saturating_sub(1)] {
                        let mut m = c.clone();
                        m[axis] = (c[axis] + delta) % side;
                        let j = index(&m);
                        if j != k && !neighbours.contains(&j) {
                            neighbours.push(j);
                        }
                    }
                }
                for j in neighbours {
                    spec.add_rate_by_index(offset + k, offset + j, step)?;
                }
                spec.add_rate_by_index(offset + k, (1 - sheet) * sites + k, 1.0 / t)?;
            }
        }
        Ok(spec)
    };
    Ok(ChainFamily::new(name, grid, generator))
}

const EX1: &str = r#"
name = "ex1"
theta = "2"
states = ["-1", "0", "1"]

[valley]
well = ["-1"]
basin = ["-1", "0"]
attractor = "-1"

[[rates]]
from = "-1"
to = "0"
rate = "N"

[[rates]]
from = "1"
to = "0"
rate = "N"

[[rates]]
from = "0"
to = "-1"
rate = "1"

[[rates]]
from = "0"
to = "1"
rate = "1"
"#;

const EX2: &str = r#"
name = "ex2"
states = ["-1", "0", "1"]

[valley]
well = ["-1"]
basin = ["-1", "0"]
attractor = "-1"

[[rates]]
from = "-1"
to = "0"
rate = "1"

[[rates]]
from = "1"
to = "0"
rate = "1"

[[rates]]
from = "0"
to = "-1"
rate = "N"

[[rates]]
from = "0"
to = "1"
rate = "N"
"#;

const EX4: &str = r#"
name = "ex4"
theta = "N^-2"
states = ["0", "1", "2"]

[valley]
well = ["1", "2"]
basin = ["1", "2"]
attractor = "1"

[partition]
wells = [["0"], ["1", "2"]]
attractors = ["0", "1"]

[[rates]]
from = "1"
to = "0"
rate = "N - 1"

[[rates]]
from = "1"
to = "2"
rate = "1"

[[rates]]
from = "2"
to = "1"
rate = "N^-1"

[[rates]]
from = "0"
to = "1"
rate = "N^2"
"#;

const EX5: &str = r#"
name = "ex5"
theta = "N"
states = ["1", "2", "3", "4", "5"]

[valley]
well = ["3"]
basin = ["3", "4"]
attractor = "3"

[partition]
wells = [["3"], ["5"]]
attractors = ["3", "5"]

[[rates]]
from = "2"
to = "1"
rate = "1"

[[rates]]
from = "2"
to = "3"
rate = "1"

[[rates]]
from = "4"
to = "3"
rate = "1"

[[rates]]
from = "4"
to = "5"
rate = "1"

[[rates]]
from = "1"
to = "2"
rate = "N^-2"

[[rates]]
from = "3"
to = "2"
rate = "N^-3"

[[rates]]
from = "3"
to = "4"
rate = "N^-1"

[[rates]]
from = "5"
to = "4"
rate = "N^-1"
"#;

const EX6: &str = r#"
name = "ex6"
simulation_only = true
theta = "2"
states = ["1", "2", "3"]

[valley]
well = ["1"]
basin = ["1", "2"]
attractor = "1"

[[rates]]
from = "1"
to = "2"
rate = "N"

[[rates]]
from = "2"
to = "1"
rate = "N - 1"

[[rates]]
from = "2"
to = "3"
rate = "1"
"#;

const EX7: &str = r#"
name = "ex7"
theta = "N"
states = ["1", "2", "3", "4", "5"]

[valley]
well = ["1"]
basin = ["1", "2"]
attractor = "1"

[partition]
wells = [["1"], ["3"], ["5"]]
attractors = ["1", "3", "5"]

[[rates]]
from = "2"
to = "1"
rate = "1"

[[rates]]
from = "2"
to = "3"
rate = "1"

[[rates]]
from = "4"
to = "3"
rate = "1"

[[rates]]
from = "4"
to = "5"
rate = "1"

[[rates]]
from = "1"
to = "2"
rate = "N^-1"

[[rates]]
from = "3"
to = "4"
rate = "N^-1"

[[rates]]
from = "5"
to = "4"
rate = "N^-1"

[[rates]]
from = "3"
to = "2"
rate = "N^-2"
"#;

// Self-loops at 0 and 3 do not move the process and are left out.
const EX8: &str = r#"
name = "ex8"
simulation_only = true
theta = "1"
states = ["0", "1", "2", "3"]

[valley]
well = ["1", "2"]
basin = ["1", "2"]
attractor = "1"

[[rates]]
from = "1"
to = "0"
rate = "1 - N^-1"

[[rates]]
from = "2"
to = "3"
rate = "1 - N^-1"

[[rates]]
from = "1"
to = "2"
rate = "N^-1"

[[rates]]
from = "2"
to = "1"
rate = "N^-1"
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Chain;

    #[test]
    fn every_builtin_loads() {
        for name in FamilyDefinition::builtin_names() {
            let loaded = FamilyDefinition::builtin(name).unwrap().load().unwrap();
            assert_eq!(loaded.family.simulation_only, matches!(*name, "ex6" | "ex8"), "{name}");
        }
    }

    #[test]
    fn ex5_rates() {
        let f = load_family("ex5").unwrap().family;
        let s = f.spec(10.0).unwrap();
        let r = |a: &str, b: &str| s.rate(s.index_of(a).unwrap(), s.index_of(b).unwrap());
        assert_eq!(s.len(), 5);
        assert_eq!(r("1", "2"), 1e-2);
        assert!((r("3", "2") - 1e-3).abs() < 1e-18);
        assert_eq!(r("3", "4"), 0.1);
        assert_eq!(r("5", "4"), 0.1);
        for (a, b) in [("2", "1"), ("2", "3"), ("4", "3"), ("4", "5")] {
            assert_eq!(r(a, b), 1.0);
        }
        assert_eq!(s.rates().count(), 8);
    }

    #[test]
    fn torus_ring_coupling() {
        let mut def = FamilyDefinition::builtin("torus2").unwrap();
        def.theta = Some(Expr::parse("N^2").unwrap());
        let f = def.load().unwrap().family;
        let c = Chain::build(&f.spec(5.0).unwrap()).unwrap();
        assert_eq!(c.len(), 10);
        let a = c.index_of("2|+").unwrap();
        assert_eq!(c.rate(a, c.index_of("2|-").unwrap()), 1.0 / 25.0);
        assert_eq!(c.rate(a, c.index_of("3|+").unwrap()), 0.5);
        assert_eq!(c.rate(a, c.index_of("1|+").unwrap()), 0.5);
        assert_eq!(c.out_rates(a).len(), 3);
    }

    #[test]
    fn torus_cap_enforced() {
        let mut def = FamilyDefinition::builtin("torus2").unwrap();
        def.params = Some(TorusParams {
            d: 3,
            max_states: Some(100),
        });
        assert!(matches!(def.load(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn negative_rate_reported() {
        let text = r#"
name = "neg"
grid = [1, 2, 3, 4]
states = ["a", "b"]
[[rates]]
from = "a"
to = "b"
rate = "2 - N"
[[rates]]
from = "b"
to = "a"
rate = "1"
"#;
        let err = FamilyDefinition::from_toml_str(text).unwrap().load().unwrap_err();
        assert!(matches!(err, Error::NegativeRate { n, .. } if n == 3.0), "{err:?}");
    }

    #[test]
    fn malformed_expression_has_line() {
        let text = "name = \"x\"\nstates = [\"a\", \"b\"]\n\n[[rates]]\nfrom = \"a\"\nto = \"b\"\nrate = \"N^\"\n";
        let err = FamilyDefinition::from_toml_str(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err:?}");
    }

    #[test]
    fn unknown_state_in_valley() {
        let mut def = FamilyDefinition::builtin("ex5").unwrap();
        def.valley.as_mut().unwrap().basin = SetSelector::new(["3", "9"]);
        assert_eq!(def.load().unwrap_err(), Error::UnknownState("9".into()));
    }

    #[test]
    fn definitions_round_trip() {
        for name in FamilyDefinition::builtin_names() {
            let def = FamilyDefinition::builtin(name).unwrap();
            let text = def.to_toml_string().unwrap();
            assert_eq!(FamilyDefinition::from_toml_str(&text).unwrap(), def, "{name}");
        }
    }

    #[test]
    fn builtin_overrides() {
        let text = "name = \"mine\"\nbuiltin = \"ex7\"\ngrid = [10, 100, 1000, 10000]\n";
        let def = FamilyDefinition::from_toml_str(text).unwrap().expand().unwrap();
        assert_eq!(def.grid, Some(vec![10.0, 100.0, 1000.0, 10000.0]));
        assert_eq!(def.states.len(), 5);
        assert_eq!(def.name, "mine");
    }
}
