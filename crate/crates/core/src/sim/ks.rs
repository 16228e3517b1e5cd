use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KS_MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against the unit-mean exponential law,
/// with the asymptotic Kolmogorov p-value.
pub fn ks_exponential_test(samples: &[f64]) -> Result<KsResult> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: KS_MIN_SAMPLES,
            got: n,
        });
    }
    if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput("samples must be finite and nonnegative".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = -(-x).exp_m1();
            let above = (i + 1) as f64 / nf - cdf;
            let below = cdf - i as f64 / nf;
            above.max(below)
        })
        .fold(0.0f64, f64::max);
    Ok(KsResult {
        n,
        statistic,
        p_value: kolmogorov_survival(nf.sqrt() * statistic),
    })
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_samples() {
        assert_eq!(
            ks_exponential_test(&[1.0; 10]).unwrap_err(),
            Error::TooFewSamples { needed: 30, got: 10 }
        );
    }

    #[test]
    fn constant_samples_rejected() {
        let r = ks_exponential_test(&[1.0; 1000]).unwrap();
        assert!(r.p_value < 1e-10, "{r:?}");
        assert!((0.0..=1.0).contains(&r.statistic));
    }

    #[test]
    fn exact_quantiles_pass() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        let r = ks_exponential_test(&s).unwrap();
        assert!(r.statistic <= 0.5 / n as f64 + 1e-12);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn survival_function_reference_values() {
        // Kolmogorov distribution: Q(1.36) ≈ 0.0495, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_survival(1.36) - 0.0495).abs() < 5e-4);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 2e-4);
    }
}
