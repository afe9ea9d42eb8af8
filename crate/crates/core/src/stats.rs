//! Small statistics toolkit used by the experiment runners.

use rand::Rng;
use serde::Serialize;

use crate::error::{Result, SlabError};
use crate::rng;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Percentile bootstrap confidence interval for the median.
pub fn bootstrap_median_ci(x: &[f64], level: f64, resamples: usize, seed: u64) -> (f64, f64) {
    let mut r = rng::stream(seed);
    let n = x.len();
    let mut meds: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s: Vec<f64> = (0..n).map(|_| x[r.random_range(0..n)]).collect();
            s.sort_by(f64::total_cmp);
            quantile_sorted(&s, 0.5)
        })
        .collect();
    meds.sort_by(f64::total_cmp);
    let a = 0.5 * (1.0 - level);
    (quantile_sorted(&meds, a), quantile_sorted(&meds, 1.0 - a))
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
}

impl LinearFit {
    /// Two-sided normal-approximation interval for the slope.
    pub fn slope_ci(&self, z: f64) -> (f64, f64) {
        (self.slope - z * self.slope_stderr, self.slope + z * self.slope_stderr)
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(SlabError::domain("linear fit needs at least two paired points"));
    }
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SlabError::domain("linear fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if n > 2.0 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LinearFit { slope, intercept, r_squared, slope_stderr })
}

/// Equal-width bins partitioning `[−1, 1]` with the Freedman–Diaconis width
/// `2·IQR·n^{−1/3}` rounded so an even number of bins fits exactly (so zero
/// is always an edge). Falls back to Sturges' count when the IQR vanishes.
pub fn fd_edges_unit(samples: &[f64], max_bins: usize) -> Vec<f64> {
    let n = samples.len().max(1) as f64;
    let iqr = if samples.len() >= 2 { quantile(samples, 0.75) - quantile(samples, 0.25) } else { 0.0 };
    let mut k = if iqr > 0.0 {
        (2.0 / (2.0 * iqr * n.powf(-1.0 / 3.0))).ceil() as usize
    } else {
        (n.log2().ceil() as usize + 1).max(2)
    };
    k = k.clamp(2, max_bins.max(2));
    if k % 2 == 1 {
        k += 1;
    }
    (0..=k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect()
}

/// Counts of samples per bin; samples outside the edges are dropped, the last
/// bin is closed on the right.
pub fn histogram(samples: &[f64], edges: &[f64]) -> Vec<usize> {
    let k = edges.len() - 1;
    let mut c = vec![0usize; k];
    for &x in samples {
        if x < edges[0] || x > edges[k] {
            continue;
        }
        let i = edges.partition_point(|e| *e <= x).saturating_sub(1).min(k - 1);
        c[i] += 1;
    }
    c
}

/// `½ Σ |p̂ᵢ − pᵢ|` between empirical counts and reference probabilities.
pub fn tv_counts_vs_probs(counts: &[usize], probs: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let t = total as f64;
    (0.5 * counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / t - p).abs()).sum::<f64>()).min(1.0)
}

/// `½ Σ |p̂ᵢ − q̂ᵢ|` between two empirical count vectors.
pub fn tv_counts(a: &[usize], b: &[usize]) -> f64 {
    let (ta, tb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    (0.5 * a.iter().zip(b).map(|(&x, &y)| (x as f64 / ta - y as f64 / tb).abs()).sum::<f64>()).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let x = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&x), 2.5);
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
    }

    #[test]
    fn fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr.abs() < 1e-12);
    }

    #[test]
    fn fd_edges_have_zero_as_edge() {
        let s: Vec<f64> = (0..500).map(|i| (i as f64 / 499.0) * 0.3 + 0.2).collect();
        let e = fd_edges_unit(&s, 10_000);
        assert_eq!(e[0], -1.0);
        assert!((e[e.len() - 1] - 1.0).abs() < 1e-15);
        assert!((e.len() - 1) % 2 == 0);
        assert!(e.iter().any(|&v| v == 0.0));
        let same = vec![0.5; 100];
        assert!(fd_edges_unit(&same, 10_000).len() >= 3);
    }

    #[test]
    fn histogram_and_tv() {
        let e = [-1.0, 0.0, 1.0];
        let c = histogram(&[-0.5, 0.5, 1.0, 0.0], &e);
        assert_eq!(c, vec![1, 3]);
        assert!((tv_counts_vs_probs(&c, &[0.5, 0.5]) - 0.25).abs() < 1e-15);
        assert_eq!(tv_counts(&[1, 0], &[0, 2]), 1.0);
    }

    #[test]
    fn bootstrap_ci_brackets_median() {
        let x: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let (lo, hi) = bootstrap_median_ci(&x, 0.95, 500, 3);
        assert!(lo <= 50.0 && 50.0 <= hi);
    }
}
