//! Closed-form free energies, the slow-mixing rate, and finite-N partition
//! functions.
//!
//! Free energies are `lim (1/N) log Z_N` with `Z_N = E_σ e^{βH(σ)}` and `σ`
//! uniform on the sphere of radius `√N`.

mod contour;
mod marginal;
mod semicircle;

pub use contour::{find_saddle, saddle_and_contour, ContourResult, SaddleResult};
pub use marginal::{
    exact_m_marginal, exact_m_marginal_lambdas, interpolated_m_marginal, modified_marginal_tv, overlap_grid, MarginalDensity, ModifiedTv,
};
pub use semicircle::{semicircle_funcs, semicircle_quadrature_oracle, SemicircleValues};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SlabError};
use crate::matrix_model::PhasePoint;
use crate::rng;

fn require_spike_outlier(theta: f64) -> Result<()> {
    if !(theta > 1.0) {
        return Err(SlabError::domain(format!("needs theta > 1, got {theta}")));
    }
    Ok(())
}

/// Free energy of spherical SK: `β²/4` for `β < 1`, `β − ¾ − ½ log β` otherwise.
pub fn f_null(beta: f64) -> f64 {
    if beta < 1.0 {
        0.25 * beta * beta
    } else {
        beta - 0.75 - 0.5 * beta.ln()
    }
}

/// Limiting free energy of the spiked model.
pub fn f_spiked(phase: &PhasePoint) -> Result<f64> {
    let (a, t) = (phase.alpha(), phase.theta());
    require_spike_outlier(t)?;
    Ok(if a < 1.0 {
        a * a / (4.0 * t * t)
    } else {
        a / (2.0 * t) * (t + 1.0 / t) - 1.0 / (4.0 * t * t) - 0.5 * a.ln() - 0.5
    })
}

/// Free energy restricted to the band `m₁ = q`:
/// `(β/2)λ_θ q² + ½ log(1−q²) + F_∅(β(1−q²))`, with `λ_θ = θ + 1/θ`.
///
/// The residual sphere carries a fraction `1−q²` of the squared radius, so
/// it sees spherical SK at inverse temperature `β(1−q²)`; the two branches of
/// `F_∅` meet at `q² = 1 − 1/β`.
pub fn f_band(q: f64, phase: &PhasePoint) -> Result<f64> {
    let t = phase.theta();
    require_spike_outlier(t)?;
    if !(q.abs() < 1.0) {
        return Err(SlabError::domain(format!("band overlap must satisfy |q| < 1, got {q}")));
    }
    let beta = phase.beta();
    let lt = t + 1.0 / t;
    let r = 1.0 - q * q;
    let residual = if beta * r < 1.0 {
        0.5 * r.ln() + 0.25 * beta * beta * r * r
    } else {
        // ½ log r + β r − ¾ − ½ log(β r), with the logs of r cancelled.
        beta * r - 0.75 - 0.5 * beta.ln()
    };
    Ok(0.5 * beta * lt * q * q + residual)
}

/// The rate `Δ_{α,θ}` of the equatorial bottleneck, in closed form.
pub fn delta_rate(phase: &PhasePoint) -> Result<f64> {
    let (a, t) = (phase.alpha(), phase.theta());
    require_spike_outlier(t)?;
    if !(a > 1.0) {
        return Err(SlabError::domain(format!("delta needs alpha > 1, got {a}")));
    }
    Ok(if a <= t {
        a / 2.0 - (a - 1.0).powi(2) / (4.0 * t * t) - 0.5 * a.ln() - 0.5
    } else {
        0.5 * a * (1.0 - 1.0 / t).powi(2) - 0.5 * t.ln() - 1.0 / (4.0 * t * t) + 0.25
    })
}

/// Mean and variance of `R = m₁²` under the Gibbs measure to leading order:
/// `R ≈ 1 − 1/(βθ)` with variance `2 s₂(θ + 1/θ)/(β² N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapPrediction {
    pub mean: f64,
    pub variance: f64,
}

pub fn stationary_overlap_prediction(phase: &PhasePoint) -> Result<OverlapPrediction> {
    let (beta, t) = (phase.beta(), phase.theta());
    if !(beta * t > 1.0) {
        return Err(SlabError::domain(format!("overlap concentrates only for beta*theta > 1, got {}", beta * t)));
    }
    require_spike_outlier(t)?;
    let s2 = semicircle_funcs(t + 1.0 / t)?.s2;
    Ok(OverlapPrediction {
        mean: 1.0 - 1.0 / (beta * t),
        variance: 2.0 * s2 / (beta * beta * phase.n() as f64),
    })
}

/// Plain Monte Carlo estimate of `(1/N) log E_σ e^{βH(σ)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub value: f64,
    /// Delta-method standard error of `value`.
    pub stderr: f64,
    pub samples: u64,
}

/// Streaming log-sum-exp accumulator for `Σ e^{ℓ}` and `Σ e^{2ℓ}`.
#[derive(Debug, Clone, Copy)]
struct LogMoments {
    shift: f64,
    s1: f64,
    s2: f64,
    count: u64,
}

impl LogMoments {
    fn new() -> Self {
        Self { shift: f64::NEG_INFINITY, s1: 0.0, s2: 0.0, count: 0 }
    }

    fn push(&mut self, l: f64) {
        if l > self.shift {
            let r = (self.shift - l).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.shift = l;
        }
        let w = (l - self.shift).exp();
        self.s1 += w;
        self.s2 += w * w;
        self.count += 1;
    }

    fn merge(mut self, o: Self) -> Self {
        if o.count == 0 {
            return self;
        }
        if self.count == 0 {
            return o;
        }
        let shift = self.shift.max(o.shift);
        let (ra, rb) = ((self.shift - shift).exp(), (o.shift - shift).exp());
        self.s1 = self.s1 * ra + o.s1 * rb;
        self.s2 = self.s2 * ra * ra + o.s2 * rb * rb;
        self.shift = shift;
        self.count += o.count;
        self
    }
}

/// Samples `σ` uniformly on the sphere and averages `e^{βH}` in log space.
/// Work is split into fixed chunks with their own derived streams, so the
/// estimate does not depend on the number of threads.
pub fn monte_carlo_log_partition(lambdas: &[f64], beta: f64, samples: u64, seed: u64) -> Result<MonteCarloEstimate> {
    if samples < 2 {
        return Err(SlabError::domain("Monte Carlo needs at least two samples"));
    }
    let n = lambdas.len();
    const CHUNK: u64 = 1 << 16;
    let chunks = samples.div_ceil(CHUNK);
    let acc = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(rng::derive_seed(seed, c));
            let count = CHUNK.min(samples - c * CHUNK);
            let mut m = LogMoments::new();
            let mut x = vec![0.0; n];
            for _ in 0..count {
                let mut norm2 = 0.0;
                let mut e = 0.0;
                for (xi, l) in x.iter_mut().zip(lambdas) {
                    let z: f64 = StandardNormal.sample(&mut r);
                    *xi = z;
                    norm2 += z * z;
                    e += l * z * z;
                }
                // βH = (β/2) Σ λ X² with X = z √N/|z|.
                m.push(0.5 * beta * n as f64 * e / norm2);
            }
            m
        })
        .reduce(LogMoments::new, LogMoments::merge);
    let k = acc.count as f64;
    let mean = acc.s1 / k;
    let var = (acc.s2 / k - mean * mean).max(0.0) * k / (k - 1.0);
    let nf = n as f64;
    Ok(MonteCarloEstimate {
        value: (acc.shift + mean.ln()) / nf,
        stderr: (var / k).sqrt() / mean / nf,
        samples: acc.count,
    })
}

/// Everything the `free-energy` command reports for one phase point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEnergyReport {
    pub closed_form: f64,
    pub band_profile: Vec<(f64, f64)>,
    pub delta: Option<f64>,
    pub contour_value: Option<f64>,
    pub saddle_value: Option<f64>,
    pub mc_value: Option<f64>,
    pub mc_stderr: Option<f64>,
}

/// Closed-form part of a report: `F(α,θ)`, the band profile on `q_grid` and,
/// when `α > 1`, `Δ_{α,θ}`.
pub fn closed_form_report(phase: &PhasePoint, q_grid: &[f64]) -> Result<FreeEnergyReport> {
    let closed_form = f_spiked(phase)?;
    let band_profile = q_grid
        .iter()
        .map(|&q| f_band(q, phase).map(|f| (q, f)))
        .collect::<Result<Vec<_>>>()?;
    let delta = if phase.alpha() > 1.0 { Some(delta_rate(phase)?) } else { None };
    Ok(FreeEnergyReport {
        closed_form,
        band_profile,
        delta,
        contour_value: None,
        saddle_value: None,
        mc_value: None,
        mc_stderr: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(a: f64, t: f64) -> PhasePoint {
        PhasePoint::new(a, t, 100).unwrap()
    }

    #[test]
    fn f_spiked_examples() {
        assert!((f_spiked(&pp(0.5, 2.0)).unwrap() - 0.015625).abs() < 1e-15);
        let want = 1.25 - 0.0625 - 0.5 * 2f64.ln() - 0.5;
        assert!((f_spiked(&pp(2.0, 2.0)).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.34093).abs() < 1e-5);
        assert!(f_spiked(&pp(2.0, 1.0)).is_err());
    }

    #[test]
    fn f_spiked_branches_meet_at_alpha_one() {
        for &t in &[1.5f64, 2.0, 5.0] {
            let lo = 1.0 / (4.0 * t * t);
            let hi = 1.0 / (2.0 * t) * (t + 1.0 / t) - 1.0 / (4.0 * t * t) - 0.5;
            assert!((lo - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn band_through_typical_overlap_attains_free_energy() {
        for &(a, t) in &[(8.0, 4.0), (2.0, 2.0), (3.0, 1.5), (20.0, 6.0)] {
            let p = pp(a, t);
            let q = (1.0 - 1.0 / a as f64).sqrt();
            assert!((f_band(q, &p).unwrap() - f_spiked(&p).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn band_symmetry_and_centre() {
        let p = pp(2.0, 3.0);
        assert_eq!(f_band(0.3, &p).unwrap(), f_band(-0.3, &p).unwrap());
        assert!((f_band(0.0, &p).unwrap() - 4.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn band_branches_are_continuous() {
        let p = pp(8.0, 2.0);
        let qc = (1.0 - 1.0 / p.beta()).sqrt();
        let a = f_band(qc - 1e-12, &p).unwrap();
        let b = f_band(qc + 1e-12, &p).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn delta_examples() {
        let d = delta_rate(&pp(2.0, 2.0)).unwrap();
        assert!((d - (1.0 - 1.0 / 16.0 - 0.5 * 2f64.ln() - 0.5)).abs() < 1e-15);
        assert!((d - 0.09093).abs() < 1e-5);
        let d = delta_rate(&pp(2.0, 10.0)).unwrap();
        assert!((d - (1.0 - 1.0 / 400.0 - 0.5 * 2f64.ln() - 0.5)).abs() < 1e-15);
        assert!((d - 0.1509).abs() < 1e-4);
        assert!(delta_rate(&pp(1.0, 2.0)).is_err());
    }

    #[test]
    fn delta_branches_agree_at_alpha_equals_theta() {
        for &t in &[1.5, 2.0, 3.7, 10.0] {
            let a: f64 = t;
            let lo = a / 2.0 - (a - 1.0).powi(2) / (4.0 * t * t) - 0.5 * a.ln() - 0.5;
            let hi = 0.5 * a * (1.0 - 1.0 / t).powi(2) - 0.5 * t.ln() - 1.0 / (4.0 * t * t) + 0.25;
            assert!((lo - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_prediction() {
        let p = PhasePoint::new(8.0, 4.0, 100).unwrap();
        assert!((stationary_overlap_prediction(&p).unwrap().mean - 0.875).abs() < 1e-15);
        let p = PhasePoint::new(2.0, 2.0, 90).unwrap();
        let o = stationary_overlap_prediction(&p).unwrap();
        assert!((o.variance - 2.0 / 3.0 / 90.0).abs() < 1e-15);
        let p = PhasePoint::new(1.0 + 1e-9, 2.0, 90).unwrap();
        assert!(stationary_overlap_prediction(&p).unwrap().mean < 1e-8);
        assert!(stationary_overlap_prediction(&PhasePoint::new(1.0, 2.0, 90).unwrap()).is_err());
    }

    #[test]
    fn monte_carlo_on_constant_spectrum() {
        let est = monte_carlo_log_partition(&[0.7; 6], 1.5, 1000, 1).unwrap();
        assert!((est.value - 0.5 * 1.5 * 0.7).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn log_moments_merge_matches_sequential() {
        let ls = [0.1, 5.0, -3.0, 2.0, 7.5, 7.4];
        let mut a = LogMoments::new();
        ls.iter().for_each(|&l| a.push(l));
        let mut b = LogMoments::new();
        let mut c = LogMoments::new();
        ls[..3].iter().for_each(|&l| b.push(l));
        ls[3..].iter().for_each(|&l| c.push(l));
        let m = b.merge(c);
        assert!((a.s1.ln() + a.shift - (m.s1.ln() + m.shift)).abs() < 1e-12);
        assert!((a.s2.ln() + 2.0 * a.shift - (m.s2.ln() + 2.0 * m.shift)).abs() < 1e-12);
    }
}
