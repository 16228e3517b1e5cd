//! Power-law fits of sequences indexed by N, used to decide asymptotic
//! statements ("→ 0", "converges") from finitely many grid points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 4;
/// Exponents below this are read as vanishing.
pub const VANISH_EXPONENT: f64 = -0.2;
/// Exponents above this are read as diverging.
pub const DIVERGE_EXPONENT: f64 = 0.2;
/// RMS residual in natural-log units above which no verdict is drawn.
pub const MAX_FIT_RESIDUAL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Vanishes,
    Converges,
    Diverges,
    Inconclusive,
}

/// `value ≈ prefactor · N^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS of the log residuals.
    pub residual: f64,
    pub verdict: Verdict,
}

/// Least-squares fit of `ln value` against `ln N`.
pub fn scale_fit(grid: &[f64], values: &[f64]) -> Result<ScaleFit> {
    if grid.len() != values.len() {
        return Err(Error::InvalidInput("grid and values differ in length".into()));
    }
    if values.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_POINTS,
            got: values.len(),
        });
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveValue { index, value });
    }
    if grid.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::InvalidInput("grid values must be positive".into()));
    }
    let x: Vec<f64> = grid.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput("grid must contain distinct values".into()));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let e = b - (intercept + exponent * a);
            e * e
        })
        .sum::<f64>()
        / m)
        .sqrt();
    let verdict = if residual > MAX_FIT_RESIDUAL {
        Verdict::Inconclusive
    } else if exponent < VANISH_EXPONENT {
        Verdict::Vanishes
    } else if exponent > DIVERGE_EXPONENT {
        Verdict::Diverges
    } else {
        Verdict::Converges
    };
    Ok(ScaleFit {
        exponent,
        prefactor: intercept.exp(),
        residual,
        verdict,
    })
}

/// A sequence over the grid together with its asymptotic reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub values: Vec<f64>,
    pub fit: Option<ScaleFit>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Assessment {
    /// Sequences that are identically zero vanish; sequences with some
    /// non-positive entries cannot be fitted.
    pub fn of(grid: &[f64], values: Vec<f64>) -> Assessment {
        if values.iter().all(|v| *v == 0.0) {
            return Assessment {
                values,
                fit: None,
                verdict: Verdict::Vanishes,
                note: Some("identically zero".into()),
            };
        }
        match scale_fit(grid, &values) {
            Ok(fit) => Assessment {
                verdict: fit.verdict,
                fit: Some(fit),
                values,
                note: None,
            },
            Err(e) => Assessment {
                values,
                fit: None,
                verdict: Verdict::Inconclusive,
                note: Some(e.to_string()),
            },
        }
    }

    pub fn vanishes(&self) -> bool {
        self.verdict == Verdict::Vanishes
    }

    /// Limit read off the sequence: 0 when vanishing, the last grid value
    /// when converging or inconclusive, `None` when diverging.
    pub fn limit(&self) -> Option<f64> {
        match self.verdict {
            Verdict::Vanishes => Some(0.0),
            Verdict::Diverges => None,
            Verdict::Converges | Verdict::Inconclusive => self.values.last().copied(),
        }
    }
}

/// Geometric grid `{10, 10^1.5, 10², 10^2.5, 10³}` rounded to integers.
pub fn default_grid() -> Vec<f64> {
    [1.0f64, 1.5, 2.0, 2.5, 3.0]
        .iter()
        .map(|e| 10f64.powf(*e).round())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_inverse_power() {
        let grid = [10.0, 100.0, 1000.0, 10000.0];
        let v: Vec<f64> = grid.iter().map(|n| 3.0 / n).collect();
        let f = scale_fit(&grid, &v).unwrap();
        assert!((f.exponent + 1.0).abs() < 0.01);
        assert!((f.prefactor - 3.0).abs() < 1e-9);
        assert_eq!(f.verdict, Verdict::Vanishes);
    }

    #[test]
    fn constant_converges() {
        let grid = [10.0, 100.0, 1000.0, 10000.0];
        let f = scale_fit(&grid, &[0.5; 4]).unwrap();
        assert!(f.exponent.abs() < 0.01);
        assert_eq!(f.verdict, Verdict::Converges);
    }

    #[test]
    fn rejects_bad_input() {
        let grid = [10.0, 100.0, 1000.0, 10000.0];
        assert_eq!(
            scale_fit(&grid, &[1.0, 0.0, 1.0, 1.0]).unwrap_err(),
            Error::NonPositiveValue { index: 1, value: 0.0 }
        );
        assert!(matches!(
            scale_fit(&grid[..3], &[1.0; 3]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn assessment_limits() {
        let grid = default_grid();
        assert_eq!(grid, vec![10.0, 32.0, 100.0, 316.0, 1000.0]);
        assert_eq!(Assessment::of(&grid, vec![0.0; 5]).limit(), Some(0.0));
        assert_eq!(Assessment::of(&grid, vec![0.5; 5]).limit(), Some(0.5));
        let growing: Vec<f64> = grid.clone();
        assert_eq!(Assessment::of(&grid, growing).limit(), None);
    }
}
