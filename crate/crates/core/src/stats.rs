//! Small statistics toolkit used by the experiments: batch-means error bars
//! for correlated chains, Wilson intervals, and chi-square p-values.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Mean with a standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(mean: f64, std_error: f64) -> Self {
        Estimate { mean, std_error }
    }

    /// `(self - other) / sqrt(se_a^2 + se_b^2)`; zero when both are exact and equal.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let diff = self.mean - other.mean;
        let se = self.std_error.hypot(other.std_error);
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            }
        } else {
            diff / se
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Mean and standard error for independent samples.
pub fn iid_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len().max(1) as f64;
    Estimate::new(mean(xs), (variance(xs) / n).sqrt())
}

/// Batch-means estimate for a correlated series.
///
/// The series is cut into `batches` contiguous blocks; the standard error is
/// that of the block means. Trailing samples that do not fill a block are
/// dropped.
pub fn batch_means(xs: &[f64], batches: usize) -> Estimate {
    let batches = batches.max(2).min(xs.len().max(2));
    let size = xs.len() / batches;
    if size == 0 {
        return iid_estimate(xs);
    }
    let block_means: Vec<f64> = xs
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    Estimate::new(
        mean(&block_means),
        (variance(&block_means) / block_means.len() as f64).sqrt(),
    )
}

/// Wilson score interval for `successes` out of `trials` at `z` standard deviations.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Upper-tail probability of a chi-square statistic.
pub fn chi_square_p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(statistic)
}

/// Two-sided normal p-value of a z-score.
pub fn two_sided_p_value(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - n.cdf(z.abs()))
}

/// Two-sided p-value corresponding to a 3σ normal deviation.
pub const THREE_SIGMA_P: f64 = 0.002_699_796_063_260_207;

/// Pearson chi-square of observed counts against expected probabilities.
///
/// Bins with expected count below `min_expected` are pooled into their right
/// neighbour (the last one into its left) before the statistic is formed.
/// Returns the statistic and the degrees of freedom.
pub fn pearson_chi_square(observed: &[u64], probs: &[f64], min_expected: f64) -> (f64, usize) {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        acc.0 += o as f64;
        acc.1 += p * n;
        if acc.1 >= min_expected {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            pooled.push(acc);
        }
    }
    let stat = pooled
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    (stat, pooled.len().saturating_sub(1))
}

/// Combines independent z-scores into a chi-square statistic `sum z^2` with
/// `zs.len()` degrees of freedom and returns its p-value.
pub fn combined_z_p_value(zs: &[f64]) -> f64 {
    if zs.iter().any(|z| !z.is_finite()) {
        return 0.0;
    }
    chi_square_p_value(zs.iter().map(|z| z * z).sum(), zs.len())
}
