//! Monte Carlo estimates, moment accumulation and chi-square tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A Monte Carlo value with its standard error and sample count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl MCEstimate {
    pub fn new(value: f64, stderr: f64, n: u64) -> Self {
        debug_assert!(stderr >= 0.0 || stderr.is_nan());
        Self { value, stderr, n }
    }

    /// An exactly known value (zero standard error).
    pub fn exact(value: f64, n: u64) -> Self {
        Self::new(value, 0.0, n)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.value * k, self.stderr * k.abs(), self.n)
    }

    /// Relative standard error, zero for an exact estimate.
    pub fn rel_err(&self) -> f64 {
        if self.stderr == 0.0 {
            0.0
        } else {
            self.stderr / self.value.abs()
        }
    }

    /// Product of independent estimates, first-order delta method.
    pub fn mul(self, other: Self) -> Self {
        let value = self.value * other.value;
        let rel = self.rel_err().hypot(other.rel_err());
        Self::new(value, value.abs() * rel, self.n.min(other.n))
    }

    /// Quotient of independent estimates, first-order delta method.
    pub fn div(self, other: Self) -> Self {
        let value = self.value / other.value;
        let rel = self.rel_err().hypot(other.rel_err());
        Self::new(value, value.abs() * rel, self.n.min(other.n))
    }

    /// Independent difference.
    pub fn sub(self, other: Self) -> Self {
        Self::new(
            self.value - other.value,
            self.stderr.hypot(other.stderr),
            self.n.min(other.n),
        )
    }

    /// `|value − target| ≤ k·stderr + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + slack
    }
}

/// Log-space accumulator for a product of independent positive estimates.
#[derive(Clone, Copy, Debug, Default)]
pub struct LogProduct {
    log_value: f64,
    rel_var: f64,
    n: u64,
}

impl LogProduct {
    pub fn new() -> Self {
        Self {
            log_value: 0.0,
            rel_var: 0.0,
            n: u64::MAX,
        }
    }

    pub fn push(&mut self, factor: MCEstimate) {
        self.log_value += factor.value.ln();
        self.rel_var += factor.rel_err().powi(2);
        self.n = self.n.min(factor.n);
    }

    pub fn push_inverse(&mut self, factor: MCEstimate) {
        self.log_value -= factor.value.ln();
        self.rel_var += factor.rel_err().powi(2);
        self.n = self.n.min(factor.n);
    }

    pub fn push_exact_log(&mut self, log_factor: f64) {
        self.log_value += log_factor;
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }

    pub fn finish(&self) -> MCEstimate {
        let value = self.log_value.exp();
        let n = if self.n == u64::MAX { 1 } else { self.n };
        MCEstimate::new(value, value * self.rel_var.sqrt(), n)
    }
}

/// Welford mean/variance accumulator with block merging.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Adds `count` copies of `x`.
    pub fn push_repeated(&mut self, x: f64, count: u64) {
        if count == 0 {
            return;
        }
        self.merge(&Moments {
            n: count,
            mean: x,
            m2: 0.0,
        });
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        self.mean += delta * other.n as f64 / nf;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn estimate(&self) -> MCEstimate {
        let se = if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        MCEstimate::new(self.mean, se, self.n)
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Pairwise (binary tree) summation in slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Estimate of the mean of `xs` with the usual `sd/√n` standard error.
pub fn mean_estimate(xs: &[f64]) -> MCEstimate {
    let n = xs.len();
    if n == 0 {
        return MCEstimate::new(f64::NAN, f64::NAN, 0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = if n > 1 {
        pairwise_sum(&dev) / (n - 1) as f64
    } else {
        0.0
    };
    MCEstimate::new(mean, (var / n as f64).sqrt(), n as u64)
}

/// Result of a chi-square test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Upper tail probability of a chi-square law.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let law = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - law.cdf(statistic)).clamp(0.0, 1.0)
}

/// Pearson goodness of fit of `counts` against bin probabilities `probs`.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> ChiSquareResult {
    assert_eq!(counts.len(), probs.len());
    let total: u64 = counts.iter().sum();
    let statistic = counts
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = probs.iter().filter(|&&p| p > 0.0).count().saturating_sub(1);
    ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    }
}

/// Two-sample chi-square homogeneity test on common bins.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> ChiSquareResult {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    let mut statistic = 0.0;
    let mut used = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        used += 1;
        let ea = col * na as f64 / n;
        let eb = col * nb as f64 / n;
        statistic += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    let dof = used.saturating_sub(1);
    ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    }
}

/// Histogram of `xs` over bins `[edges[i], edges[i+1])`; the last bin is closed.
pub fn histogram(xs: &[f64], edges: &[f64]) -> Vec<u64> {
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    for &x in xs {
        let idx = edges.partition_point(|&e| e <= x);
        let bin = idx.saturating_sub(1).min(bins - 1);
        counts[bin] += 1;
    }
    counts
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
