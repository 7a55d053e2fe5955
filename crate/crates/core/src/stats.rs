//! Summary statistics used everywhere: one quantile definition, means,
//! variances, and batch-means Monte Carlo standard errors.

use crate::error::{Error, Result};

/// Empirical quantile with linear interpolation between order statistics
/// (the `h = (n-1)p + 1` definition). This is the single quantile definition
/// used throughout the crate.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile level must be in [0,1]");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = h - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// Sorts a copy of the data and evaluates several quantile levels at once.
pub fn quantiles(values: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantiles of empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(levels.iter().map(|&p| quantile(&sorted, p)).collect())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sd(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Monte Carlo standard error of the chain mean by the method of batch means,
/// which stays valid under the autocorrelation of MCMC output.
pub fn batch_means_se(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return sd(chain) / (n.max(1) as f64).sqrt();
    }
    let n_batches = (n as f64).sqrt().floor() as usize;
    let batch_len = n / n_batches;
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|b| mean(&chain[b * batch_len..(b + 1) * batch_len]))
        .collect();
    (variance(&batch_means) / n_batches as f64).sqrt()
}

/// Running mean/variance accumulator (Welford), usable over streamed blocks.
#[derive(Debug, Clone, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let d = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += d * n2 / n;
        self.m2 += other.m2 + d * d * n1 * n2 / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divides by n).
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_linear_interpolation_on_1_to_100() {
        // frozen oracle: h = 99*p, interpolate between order statistics
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let q = quantiles(&values, &[0.025, 0.5, 0.975]).unwrap();
        assert_relative_eq!(q[0], 3.475, epsilon = 1e-12);
        assert_relative_eq!(q[1], 50.5, epsilon = 1e-12);
        assert_relative_eq!(q[2], 97.525, epsilon = 1e-12);
    }

    #[test]
    fn quantile_of_constant_sample() {
        let values = vec![4.2; 7];
        let q = quantiles(&values, &[0.025, 0.5, 0.975]).unwrap();
        assert!(q.iter().all(|&v| v == 4.2));
    }

    #[test]
    fn running_moments_match_direct() {
        let xs = vec![0.3, -1.2, 2.2, 0.0, 5.5, -3.1];
        let mut acc = RunningMoments::default();
        for &x in &xs {
            acc.push(x);
        }
        assert_relative_eq!(acc.mean(), mean(&xs), epsilon = 1e-12);
        let pop_var = xs.iter().map(|x| (x - mean(&xs)).powi(2)).sum::<f64>() / xs.len() as f64;
        assert_relative_eq!(acc.variance(), pop_var, epsilon = 1e-12);
    }

    #[test]
    fn running_moments_merge_equals_single_pass() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut a = RunningMoments::default();
        let mut b = RunningMoments::default();
        for &x in &xs[..20] {
            a.push(x);
        }
        for &x in &xs[20..] {
            b.push(x);
        }
        a.merge(&b);
        let mut whole = RunningMoments::default();
        for &x in &xs {
            whole.push(x);
        }
        assert_relative_eq!(a.mean(), whole.mean(), epsilon = 1e-12);
        assert_relative_eq!(a.variance(), whole.variance(), epsilon = 1e-12);
        assert_eq!(a.count(), whole.count());
    }
}
