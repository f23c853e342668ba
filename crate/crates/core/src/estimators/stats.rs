//! Error bars for sample means.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Bootstrap resamples used unless a caller asks otherwise.
pub const DEFAULT_RESAMPLES: usize = 1000;
/// Two-sided level of the percentile interval (three standard deviations).
pub const DEFAULT_CI_LEVEL: f64 = 0.997;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub stderr: f64,
    pub ci: Option<ConfidenceInterval>,
    pub n_samples: usize,
    pub estimator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_hash: Option<String>,
    /// Set when the statistic had to be forced through a non-physical
    /// region, e.g. the square root of a negative mean.
    #[serde(default)]
    pub biased: bool,
}

impl EstimateReport {
    /// `|value - target| / stderr`, infinite for a zero error bar with a miss.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.value - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Uncertainty {
    Bootstrap { resamples: usize },
    MedianOfMeans { groups: usize },
}

impl Default for Uncertainty {
    fn default() -> Self {
        Self::Bootstrap { resamples: DEFAULT_RESAMPLES }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// `sign(m) sqrt|m|`.
pub fn signed_sqrt(m: f64) -> f64 {
    m.signum() * m.abs().sqrt()
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!("{} values, need at least 2", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return param("non-finite sample value");
    }
    Ok(())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let t = pos - i as f64;
    sorted[i] * (1.0 - t) + sorted[j] * t
}

/// Nonparametric bootstrap of `statistic(mean)`. The standard error is the
/// spread of the resampled statistic and the interval is the percentile
/// interval at `level`.
pub fn bootstrap<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    level: f64,
    statistic: impl Fn(f64) -> f64,
    rng: &mut R,
) -> Result<(f64, f64, ConfidenceInterval)> {
    check_values(values)?;
    if resamples < 2 {
        return param("bootstrap needs at least two resamples");
    }
    if !(0.0..1.0).contains(&level) {
        return param(format!("confidence level {level} outside (0, 1)"));
    }
    let n = values.len();
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let s: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
            statistic(s / n as f64)
        })
        .collect();
    let value = statistic(mean(values));
    let se = variance(&stats).sqrt();
    stats.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - level) / 2.0;
    let ci = ConfidenceInterval { level, lo: quantile(&stats, tail), hi: quantile(&stats, 1.0 - tail) };
    Ok((value, se, ci))
}

/// Median of the means of `groups` contiguous groups; leftover values past
/// `groups * floor(n / groups)` are dropped.
pub fn median_of_means(values: &[f64], groups: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no values".into()));
    }
    if groups == 0 || groups > values.len() {
        return param(format!("cannot split {} values into {groups} groups", values.len()));
    }
    let size = values.len() / groups;
    let mut means: Vec<f64> = values.chunks_exact(size).take(groups).map(mean).collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let k = means.len();
    Ok(if k % 2 == 1 { means[k / 2] } else { 0.5 * (means[k / 2 - 1] + means[k / 2]) })
}

/// Report for the sample mean of `values`.
pub fn uncertainty<R: Rng + ?Sized>(values: &[f64], method: Uncertainty, estimator: &str, rng: &mut R) -> Result<EstimateReport> {
    report_with(values, method, estimator, |m| m, rng)
}

/// Report for `statistic(mean)`, with the error bar of the chosen method.
pub fn report_with<R: Rng + ?Sized>(
    values: &[f64],
    method: Uncertainty,
    estimator: &str,
    statistic: impl Fn(f64) -> f64,
    rng: &mut R,
) -> Result<EstimateReport> {
    check_values(values)?;
    let (value, stderr, ci) = match method {
        Uncertainty::Bootstrap { resamples } => {
            let (v, se, ci) = bootstrap(values, resamples, DEFAULT_CI_LEVEL, &statistic, rng)?;
            (v, se, Some(ci))
        }
        Uncertainty::MedianOfMeans { groups } => {
            let v = statistic(median_of_means(values, groups)?);
            // the median of g group means has about pi/2 times the variance of their mean
            let size = values.len() / groups;
            let gm: Vec<f64> = values.chunks_exact(size).take(groups).map(mean).collect();
            let se = if groups > 1 { (std::f64::consts::FRAC_PI_2 * variance(&gm) / groups as f64).sqrt() } else { (variance(values) / values.len() as f64).sqrt() };
            (v, se, None)
        }
    };
    Ok(EstimateReport { value, stderr, ci, n_samples: values.len(), estimator: estimator.to_string(), snapshot_hash: None, biased: false })
}

/// Samples needed for accuracy `eps` with failure probability `delta`:
/// `ceil(norm2 / (eps^2 delta))`.
pub fn sample_complexity_bound(norm2: f64, eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0 && delta > 0.0) || !norm2.is_finite() || norm2 < 0.0 {
        return param("need eps > 0, delta > 0 and a finite nonnegative norm");
    }
    let x = norm2 / (eps * eps * delta);
    // absorb rounding so that exact ratios are not pushed up by one
    Ok((x * (1.0 - 1e-12)).ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_has_zero_error() {
        let v = vec![2.5; 50];
        let r = uncertainty(&v, Uncertainty::default(), "mean", &mut rng_from_seed(1)).unwrap();
        assert_eq!(r.value, 2.5);
        assert_eq!(r.stderr, 0.0);
        let ci = r.ci.unwrap();
        assert!(ci.lo <= r.value && r.value <= ci.hi);
    }

    #[test]
    fn bootstrap_matches_normal_theory() {
        let mut rng = rng_from_seed(7);
        let m = 400;
        let mut ratios = Vec::new();
        for _ in 0..100 {
            let v: Vec<f64> = (0..m).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let (_, se, _) = bootstrap(&v, 200, 0.997, |x| x, &mut rng).unwrap();
            ratios.push(se / (3.0 / (m as f64).sqrt()));
        }
        let avg = mean(&ratios);
        assert!((avg - 1.0).abs() < 0.2, "bootstrap / theory = {avg}");
    }

    #[test]
    fn median_of_means_cases() {
        let v = [1.0, 2.0, 3.0, 10.0];
        assert_eq!(median_of_means(&v, 1).unwrap(), 4.0);
        assert_eq!(median_of_means(&v, 4).unwrap(), 2.5);
        assert_eq!(median_of_means(&[1.0, 2.0, 3.0, 4.0, 100.0], 2).unwrap(), 2.5);
        assert!(median_of_means(&v, 0).is_err());
        assert!(median_of_means(&[], 1).is_err());
    }

    #[test]
    fn rejects_tiny_input() {
        assert!(uncertainty(&[1.0], Uncertainty::default(), "mean", &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn complexity_bound() {
        assert_eq!(sample_complexity_bound(1.0, 0.1, 0.1).unwrap(), 1000);
        assert_eq!(sample_complexity_bound(1.0, 0.2, 0.1).unwrap(), 250);
        assert!(sample_complexity_bound(1.0, 0.0, 0.1).is_err());
        assert!(sample_complexity_bound(1.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn signed_root() {
        assert_eq!(signed_sqrt(4.0), 2.0);
        assert_eq!(signed_sqrt(-9.0), -3.0);
    }
}
