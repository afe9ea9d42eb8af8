//! Overlap thresholds, drift floor, Bakry–Émery constant and the modified
//! Hamiltonian used to isolate one well of the low-temperature landscape.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::matrix_model::{normalized_energy, PhasePoint, SphereState, Spectrum};

/// Top, second and bottom eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenTriple {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_n: f64,
}

impl EigenTriple {
    pub fn new(lambda1: f64, lambda2: f64, lambda_n: f64) -> Result<Self> {
        if !(lambda1 > lambda2 && lambda2 >= lambda_n) {
            return Err(SlabError::domain(format!(
                "eigenvalues must satisfy l1 > l2 >= lN, got ({lambda1}, {lambda2}, {lambda_n})"
            )));
        }
        Ok(Self { lambda1, lambda2, lambda_n })
    }

    /// Large-N limits `(θ + 1/θ, 2, −2)`; only separated from the bulk when `θ > 1`.
    pub fn limiting(theta: f64) -> Result<Self> {
        if !(theta > 1.0) {
            return Err(SlabError::domain(format!(
                "top eigenvalue sticks to the bulk edge for theta <= 1, got {theta}"
            )));
        }
        Self::new(theta + 1.0 / theta, 2.0, -2.0)
    }

    pub fn from_spectrum(s: &Spectrum) -> Result<Self> {
        Self::new(s.lambda1(), s.lambda2(), s.lambda_n())
    }

    pub fn gap(&self) -> f64 {
        self.lambda1 - self.lambda2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub m_e: f64,
    pub m_be: f64,
    pub m_pi: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// Lower bound on the drift of `|m|` below `m3`.
    pub c_e: f64,
    /// Bakry–Émery curvature at `m1`.
    pub kappa_be: f64,
    pub t_hit: f64,
    /// `m_e > m_be`; the intermediate thresholds are only ordered when set.
    pub valid: bool,
    pub beta: f64,
    pub n: usize,
    pub eig: EigenTriple,
}

/// `√(1 − 1/(βθ))`, or 0 when `βθ ≤ 1`.
pub fn m_pi(phase: &PhasePoint) -> f64 {
    let bt = phase.beta() * phase.theta();
    if bt <= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / bt).sqrt()
    }
}

pub fn m_e(beta: f64, eig: &EigenTriple) -> Result<f64> {
    let bg = beta * eig.gap();
    if !(bg > 1.0) {
        return Err(SlabError::domain(format!(
            "beta*(l1 - l2) = {bg} <= 1: the easy-region threshold does not exist"
        )));
    }
    Ok((1.0 - 1.0 / bg).sqrt())
}

/// `√((λ₁−λ_N−1/β)/(2λ₁−λ₂−λ_N))`, clamped to 0 when the numerator is negative.
pub fn m_be(beta: f64, eig: &EigenTriple) -> f64 {
    let num = eig.lambda1 - eig.lambda_n - 1.0 / beta;
    let den = 2.0 * eig.lambda1 - eig.lambda2 - eig.lambda_n;
    (num / den).max(0.0).sqrt()
}

/// `(2λ₁−λ₂−λ_N)m² − (λ₁−λ_N) + 1/β`.
pub fn kappa_be_at(m: f64, beta: f64, eig: &EigenTriple) -> f64 {
    (2.0 * eig.lambda1 - eig.lambda2 - eig.lambda_n) * m * m - (eig.lambda1 - eig.lambda_n) + 1.0 / beta
}

pub fn compute_thresholds(phase: &PhasePoint, eig: &EigenTriple) -> Result<ThresholdSet> {
    let beta = phase.beta();
    let me = m_e(beta, eig)?;
    let mbe = m_be(beta, eig);
    let step = (me - mbe) / 4.0;
    let (m1, m2, m3) = (mbe + step, mbe + 2.0 * step, mbe + 3.0 * step);
    let c_e = eig.gap() * (me * me - m3 * m3);
    let kappa_be = kappa_be_at(m1, beta, eig);
    let n = phase.n() as f64;
    let t_hit = if c_e > 0.0 {
        100.0 * (0.5 * n.ln() + ((0.5 * beta * c_e).sqrt() * m3.clamp(-1.0, 1.0).asin()).ln()) / c_e
    } else {
        f64::INFINITY
    };
    Ok(ThresholdSet {
        m_e: me,
        m_be: mbe,
        m_pi: m_pi(phase),
        m1,
        m2,
        m3,
        c_e,
        kappa_be,
        t_hit,
        valid: me > mbe,
        beta,
        n: phase.n(),
        eig: *eig,
    })
}

/// `(α^{−1/2} − 1)^{−1}`: above this θ the whole sphere is uniformly convex
/// enough for fast mixing at `α < 1`.
pub fn theta_0h(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SlabError::domain(format!("theta_0H needs 0 < alpha < 1, got {alpha}")));
    }
    Ok(1.0 / (alpha.powf(-0.5) - 1.0))
}

/// Right side of `α = θ²(θ+1)²/(θ−1)⁴`, strictly decreasing on `θ > 1`.
pub fn theta_0l_quartic(theta: f64) -> f64 {
    let t2 = theta * theta;
    t2 * (theta + 1.0).powi(2) / (theta - 1.0).powi(4)
}

/// The unique `θ > 1` with `θ²(θ+1)²/(θ−1)⁴ = α`; above it `m_E > m_BE` at
/// limiting eigenvalues.
pub fn theta_0l(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(SlabError::domain(format!("theta_0L needs alpha > 1, got {alpha}")));
    }
    // f → ∞ as θ → 1⁺ and f → 1 as θ → ∞.
    let mut lo = 1.0 + 1e-12;
    let mut hi = 2.0;
    while theta_0l_quartic(hi) > alpha {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SlabError::numerical("theta_0L bracket did not close"));
        }
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if theta_0l_quartic(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The alternative quartic `α = (θ−1)²θ²/(θ+1)⁴` with exponents swapped.
///
/// Its right side stays below 1 for every `θ > 1`, so it has no root for any
/// `α > 1`; kept so the discrepancy is executable. Returns the largest root
/// when one exists (only possible for `α < 1`).
pub fn theta_0l_swapped(alpha: f64) -> Option<f64> {
    let g = |t: f64| (t - 1.0).powi(2) * t * t / (t + 1.0).powi(4);
    if !(alpha > 0.0 && alpha < 1.0) {
        return None;
    }
    // g is increasing on θ > 1 from 0 towards 1.
    let (mut lo, mut hi) = (1.0, 2.0);
    while g(hi) < alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// The bump `F(x) = e^{−2/x}/(e^{−2/x} − e^{−2})` and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

pub fn bump_f(x: f64) -> Result<Bump> {
    if !(x > 0.0 && x < 1.0) {
        return Err(SlabError::domain(format!("bump defined on (0, 1), got {x}")));
    }
    // Written with a = e^{2/x − 2} ≥ 1 so nothing overflows near 0:
    // F = 1/(1 − a), F' = −2a/(x²(a−1)²), F'' = −4a((1−x)a + 1 + x)/(x⁴(a−1)³).
    let a = (2.0 / x - 2.0).exp();
    if !a.is_finite() {
        return Ok(Bump { f: 0.0, df: 0.0, d2f: 0.0 });
    }
    let am1 = (2.0 / x - 2.0).exp_m1();
    let x2 = x * x;
    let f = -1.0 / am1;
    let df = -2.0 * a / (x2 * am1 * am1);
    let d2f = -4.0 * a * ((1.0 - x) * a + 1.0 + x) / (x2 * x2 * am1 * am1 * am1);
    Ok(Bump { f, df, d2f })
}

/// Energy that may be the "minus infinity" sentinel of the modified
/// Hamiltonian. Sentinel states carry Gibbs weight exactly 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedEnergy {
    Finite(f64),
    NegInfinity,
}

impl ExtendedEnergy {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::NegInfinity => None,
        }
    }

    /// `exp(β·E)` with the sentinel mapped to 0.
    pub fn gibbs_weight(self, beta: f64) -> f64 {
        match self {
            Self::Finite(v) => (beta * v).exp(),
            Self::NegInfinity => 0.0,
        }
    }

    /// `β·E` with the sentinel mapped to `None`.
    pub fn log_weight(self, beta: f64) -> Option<f64> {
        self.finite().map(|v| beta * v)
    }
}

/// Correction `H̃ − H` as a function of the top overlap alone.
pub fn modification(m: f64, th: &ThresholdSet) -> ExtendedEnergy {
    let a = m.abs();
    if a >= th.m2 {
        ExtendedEnergy::Finite(0.0)
    } else if a <= th.m1 {
        ExtendedEnergy::NegInfinity
    } else {
        let x = (th.m2 - a) / (th.m2 - th.m1);
        match bump_f(x) {
            Ok(b) => ExtendedEnergy::Finite(b.f),
            // x rounds to an endpoint only at the region boundaries.
            Err(_) if x <= 0.0 => ExtendedEnergy::Finite(0.0),
            Err(_) => ExtendedEnergy::NegInfinity,
        }
    }
}

/// The symmetric modified Hamiltonian: `H` where `|m| ≥ m₂`, `H + F(·)` on the
/// collar `m₁ < |m| < m₂`, the sentinel where `|m| ≤ m₁`.
pub fn modified_hamiltonian(spectrum: &Spectrum, th: &ThresholdSet, x: &SphereState) -> Result<ExtendedEnergy> {
    if !th.valid {
        return Err(SlabError::domain("modified Hamiltonian needs valid thresholds (m_E > m_BE)"));
    }
    let obs = crate::matrix_model::observe(spectrum, x)?;
    Ok(match modification(obs.m[0], th) {
        ExtendedEnergy::Finite(d) => ExtendedEnergy::Finite(obs.energy + d),
        ExtendedEnergy::NegInfinity => ExtendedEnergy::NegInfinity,
    })
}

/// `−(Σλᵢvᵢ² − h(x)) + (1/β)(1 − 1/N)`: the Bakry–Émery quadratic form of the
/// Gibbs measure at `x` in the tangent direction `v`. `v` is projected onto
/// the tangent space at `x` and normalised.
pub fn be_quadratic_form(lambdas: &[f64], x: &[f64], v: &[f64], beta: f64) -> Result<f64> {
    let n = x.len();
    if lambdas.len() != n || v.len() != n {
        return Err(SlabError::Contract("dimension mismatch in quadratic form".into()));
    }
    let nf = n as f64;
    let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    let t: Vec<f64> = x.iter().zip(v).map(|(a, b)| b - xv / nf * a).collect();
    let norm2: f64 = t.iter().map(|a| a * a).sum();
    if !(norm2 > 0.0) {
        return Err(SlabError::Contract("direction is normal to the sphere".into()));
    }
    let q: f64 = lambdas.iter().zip(&t).map(|(l, a)| l * a * a).sum::<f64>() / norm2;
    let h = normalized_energy(lambdas, x);
    Ok(-(q - h) + (1.0 - 1.0 / nf) / beta)
}
