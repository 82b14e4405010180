//! Estimator plumbing: streaming moments, binomial confidence intervals, and
//! the result record attached to every Monte Carlo output.

use serde::{Deserialize, Serialize};

/// Monte Carlo estimate with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n: u64,
    /// Certified bound on the truncation bias attached to the run.
    pub bias_bound: f64,
    pub seed: u64,
    pub log_scale: bool,
}

impl EstimatorResult {
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (
            self.estimate - z * self.std_error,
            self.estimate + z * self.std_error,
        )
    }
}

/// Welford streaming mean/variance accumulator. Merging is exact, which keeps
/// replica-parallel reductions order-independent up to float associativity;
/// reductions in this crate always merge in replica order for bit stability.
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let delta = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n > 0 {
            (self.variance() / self.n as f64).sqrt()
        } else {
            0.0
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Binomial standard error of a frequency.
pub fn binomial_std_error(successes: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = successes as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Upper quantile of the chi-square distribution via the Wilson–Hilferty
/// normal approximation; adequate for goodness-of-fit gates at the sample
/// sizes used here.
pub fn chi_square_quantile(dof: usize, prob: f64) -> f64 {
    let k = dof as f64;
    let z = normal_quantile(prob);
    let t = 1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt();
    k * t * t * t
}

/// Standard normal quantile (Acklam's rational approximation).
pub fn normal_quantile(p: f64) -> f64 {
    assert!((0.0..1.0).contains(&p) && p > 0.0, "quantile needs p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Compensated (Kahan) summation for long reductions.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 17) as f64 * 0.25).collect();
        let mut w = Welford::default();
        for &x in &xs {
            w.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((w.mean() - mean).abs() < 1e-12);
        assert!((w.variance() - var).abs() < 1e-12);

        // merged halves agree with the single pass
        let mut a = Welford::default();
        let mut b = Welford::default();
        for &x in &xs[..50] {
            a.push(x);
        }
        for &x in &xs[50..] {
            b.push(x);
        }
        a.merge(&b);
        assert!((a.mean() - mean).abs() < 1e-12);
        assert!((a.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn wilson_contains_truth_for_fair_coin() {
        let (lo, hi) = wilson_interval(480, 1000, 1.96);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(lo > 0.44 && hi < 0.52);
    }

    #[test]
    fn normal_quantile_symmetry() {
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-4);
        assert!((normal_quantile(0.5)).abs() < 1e-12);
        assert!((normal_quantile(0.025) + normal_quantile(0.975)).abs() < 1e-9);
    }

    #[test]
    fn chi_square_quantile_sane() {
        // known: chi2(0.999, 5) ~ 20.515
        let q = chi_square_quantile(5, 0.999);
        assert!((q - 20.5).abs() < 0.5, "{q}");
    }
}
