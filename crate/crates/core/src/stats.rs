//! Monte Carlo reductions. Every sum goes through a fixed pairwise tree so
//! results do not depend on how trajectories were scheduled.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::scalar::Scalar;

pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    const LEAF: usize = 8;
    if xs.len() <= LEAF {
        return xs.iter().fold(T::zero(), |a, &b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n > 0, "estimate needs at least one sample");
        let mean = pairwise_sum(xs) / n as f64;
        if n < 2 {
            return Self { mean, stderr: f64::NAN, count: n };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            count: n,
        }
    }

    /// Self-normalized weighted mean; the error uses the delta-method
    /// variance `Σ w²(x - x̄)² / (Σ w)²`.
    pub fn weighted(xs: &[f64], weights: &[f64]) -> Self {
        assert_eq!(xs.len(), weights.len());
        let total = pairwise_sum(weights);
        let wx: Vec<f64> = xs.iter().zip(weights).map(|(x, w)| x * w).collect();
        let mean = pairwise_sum(&wx) / total;
        let dev: Vec<f64> = xs
            .iter()
            .zip(weights)
            .map(|(x, w)| w * w * (x - mean) * (x - mean))
            .collect();
        Self {
            mean,
            stderr: pairwise_sum(&dev).sqrt() / total,
            count: xs.len(),
        }
    }

    /// `sqrt(se₁² + se₂²)`.
    pub fn combined_stderr(&self, other: &Self) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// Difference in units of the combined standard error.
    pub fn z_distance(&self, other: &Self) -> f64 {
        (self.mean - other.mean).abs() / self.combined_stderr(other)
    }

    pub fn z_to(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.stderr
    }
}

/// Sample variance (unbiased) with a standard error from the fourth moment.
pub fn variance_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let m = pairwise_sum(xs) / n;
    let d2: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let var = pairwise_sum(&d2) / (n - 1.0);
    let d4: Vec<f64> = xs.iter().map(|x| (x - m).powi(4)).collect();
    let m4 = pairwise_sum(&d4) / n;
    let var_of_var = (m4 - var * var * (n - 3.0) / (n - 1.0)) / n;
    Estimate {
        mean: var,
        stderr: var_of_var.max(0.0).sqrt(),
        count: xs.len(),
    }
}

/// Ordinary least squares `y = a + b x` with a two-sided confidence
/// interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub slope_ci: (f64, f64),
}

pub fn linear_fit(x: &[f64], y: &[f64], confidence: f64) -> Option<LinearFit> {
    let n = x.len();
    if n < 3 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = pairwise_sum(x) / nf;
    let my = pairwise_sum(y) / nf;
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx).powi(2)).collect();
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx = pairwise_sum(&sxx);
    if sxx <= 0.0 {
        return None;
    }
    let slope = pairwise_sum(&sxy) / sxx;
    let intercept = my - slope * mx;
    let res: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .collect();
    let s2 = pairwise_sum(&res) / (nf - 2.0);
    let slope_stderr = (s2 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .ok()?
        .inverse_cdf(0.5 + confidence / 2.0);
    Some(LinearFit {
        intercept,
        slope,
        slope_stderr,
        slope_ci: (slope - t * slope_stderr, slope + t * slope_stderr),
    })
}

/// One-sided lower confidence bound for a binomial proportion
/// (Clopper–Pearson).
pub fn binomial_lower_bound(successes: usize, trials: usize, confidence: f64) -> f64 {
    use statrs::distribution::Beta;
    if successes == 0 {
        return 0.0;
    }
    let beta = Beta::new(successes as f64, (trials - successes + 1) as f64)
        .expect("valid beta parameters");
    beta.inverse_cdf(1.0 - confidence)
}
