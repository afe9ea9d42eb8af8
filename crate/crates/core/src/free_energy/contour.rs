//! Finite-N partition function of `H = ½ Σ λᵢXᵢ²` over the uniform measure on
//! the sphere of radius `√N`, by a contour integral through the saddle point.
//!
//! With `𝒢(z) = βz − (1/N) Σ log(z − λᵢ)` and any `γ > λ₁`,
//!
//! ```text
//! Z_N = Γ(N/2) / (2π (Nβ/2)^{N/2−1}) · ∫ e^{(N/2)𝒢(z)} dz / i
//! ```
//!
//! along a path from `γ − i∞` to `γ + i∞` passing right of the spectrum.
//! `γ` is taken at the critical point of `𝒢`, and the path
//! `z(u) = γ + iu − κu²` leaves it vertically and bends left, which adds
//! Gaussian decay to the tails without changing the value.

use libm::lgamma as ln_gamma;

use crate::error::{Result, SlabError};

/// Critical point of `𝒢` on `(λ₁, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleResult {
    pub gamma: f64,
    /// `𝒢(γ)`.
    pub g_value: f64,
    /// `𝒢″(γ)`.
    pub g_second: f64,
    /// `|𝒢′(γ)|` at termination.
    pub newton_residual: f64,
}

/// Contour evaluation of `(1/N) log Z_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourResult {
    pub saddle: SaddleResult,
    /// Gaussian (Laplace) approximation of the integral at the saddle.
    pub saddle_log_partition: f64,
    /// Quadrature of the full integral.
    pub log_partition: f64,
    /// Trapezoid nodes used on the final pass.
    pub nodes: usize,
}

fn g_prime(beta: f64, lambdas: &[f64], z: f64) -> f64 {
    let n = lambdas.len() as f64;
    beta - lambdas.iter().map(|l| 1.0 / (z - l)).sum::<f64>() / n
}

/// Solves `𝒢′(γ) = 0`. `𝒢′` increases from `−∞` at `λ₁⁺` to `β` at infinity
/// and `𝒢′(λ₁ + 1/β) ≥ 0`, so the root always lies in `(λ₁, λ₁ + 1/β]`.
pub fn find_saddle(lambdas: &[f64], beta: f64) -> Result<SaddleResult> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SlabError::domain(format!("saddle needs beta > 0, got {beta}")));
    }
    let l1 = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = lambdas.len() as f64;
    // Work in d = γ − λ₁ to keep resolution when the root hugs λ₁.
    let f = |d: f64| g_prime(beta, lambdas, l1 + d);
    let fp = |d: f64| lambdas.iter().map(|l| (l1 + d - l).powi(-2)).sum::<f64>() / n;
    let (mut lo, mut hi) = (0.0f64, 1.0 / beta);
    if f(hi) < 0.0 {
        return Err(SlabError::numerical("saddle not bracketed; check the spectrum for non-finite values"));
    }
    let mut d = 0.5 * hi;
    let mut resid = f64::INFINITY;
    for _ in 0..500 {
        let v = f(d);
        resid = v.abs();
        if v < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        if resid <= 1e-12 * beta.max(1.0) || hi - lo <= f64::EPSILON * hi {
            break;
        }
        let step = d - v / fp(d);
        d = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
    }
    if resid > 1e-10 {
        return Err(SlabError::numerical(format!(
            "saddle residual {resid:e} above 1e-10; increase N or use the high-temperature saddle"
        )));
    }
    let gamma = l1 + d;
    let g_value = beta * gamma - lambdas.iter().map(|l| (gamma - l).ln()).sum::<f64>() / n;
    Ok(SaddleResult { gamma, g_value, g_second: fp(d), newton_residual: resid })
}

/// `log` of the prefactor `Γ(N/2)/(2π(Nβ/2)^{N/2−1})`.
fn log_prefactor(n: f64, beta: f64) -> f64 {
    ln_gamma(0.5 * n) - (2.0 * std::f64::consts::PI).ln() - (0.5 * n - 1.0) * (0.5 * n * beta).ln()
}

/// `(1/N) log Z_N` by saddle point and contour quadrature.
pub fn saddle_and_contour(lambdas: &[f64], beta: f64) -> Result<ContourResult> {
    let n = lambdas.len();
    if n < 3 {
        return Err(SlabError::domain("contour representation needs N >= 3"));
    }
    let nf = n as f64;
    let saddle = find_saddle(lambdas, beta)?;
    let gamma = saddle.gamma;
    let d: Vec<f64> = lambdas.iter().map(|l| gamma - l).collect();
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    // With 2κ d_i ≤ 1 every |z − λᵢ| grows along the path, so |integrand| decreases.
    let kappa = 0.5 / dmax;
    let sigma = (2.0 / (nf * saddle.g_second)).sqrt();

    // Im[e^{(N/2)(𝒢(z(u)) − 𝒢(γ))} z′(u)]; the full path integral over i is twice its integral on u ≥ 0.
    let integrand = |u: f64| -> f64 {
        let u2 = u * u;
        let mut re = -0.5 * nf * beta * kappa * u2;
        let mut im = 0.5 * nf * beta * u;
        for &di in &d {
            let a = -kappa * u2 / di;
            let b = u / di;
            re -= 0.25 * (2.0 * a + a * a + b * b).ln_1p();
            im -= 0.5 * b.atan2(1.0 + a);
        }
        let mag = re.exp();
        // (cos im + i sin im)(−2κu + i) → imaginary part.
        mag * (im.cos() - 2.0 * kappa * u * im.sin())
    };
    let envelope = |u: f64| -> f64 {
        let u2 = u * u;
        let mut re = -0.5 * nf * beta * kappa * u2;
        for &di in &d {
            let a = -kappa * u2 / di;
            let b = u / di;
            re -= 0.25 * (2.0 * a + a * a + b * b).ln_1p();
        }
        re.exp() * (1.0 + 2.0 * kappa * u)
    };

    // u = σ sinh t; find the t beyond which the weighted envelope is negligible.
    let weight = |t: f64| sigma * t.cosh();
    let mut t_max = 1.0;
    while envelope(sigma * (t_max as f64).sinh()) * weight(t_max) > 1e-18 * sigma {
        t_max += 0.5;
        if t_max > 60.0 {
            return Err(SlabError::numerical("contour integrand does not decay"));
        }
    }
    let f = |t: f64| integrand(sigma * t.sinh()) * weight(t);

    let mut h = t_max / 64.0;
    let mut k = 64usize;
    let mut sum = 0.5 * f(0.0) + (1..=k).map(|j| f(j as f64 * h)).sum::<f64>();
    let mut prev = h * sum;
    let mut cur = prev;
    let mut converged = false;
    while k < (1 << 22) {
        let mids: f64 = (0..k).map(|j| f((j as f64 + 0.5) * h)).sum();
        sum += mids;
        h *= 0.5;
        k *= 2;
        cur = h * sum;
        if (cur - prev).abs() <= 1e-12 * cur.abs() {
            converged = true;
            break;
        }
        prev = cur;
    }
    if !converged {
        return Err(SlabError::numerical(format!(
            "contour quadrature did not converge (last two estimates {prev:e}, {cur:e})"
        )));
    }
    let integral = 2.0 * cur;
    if !(integral > 0.0) {
        return Err(SlabError::numerical(format!("contour integral is not positive: {integral:e}")));
    }
    let base = log_prefactor(nf, beta) + 0.5 * nf * saddle.g_value;
    let laplace = (4.0 * std::f64::consts::PI / (nf * saddle.g_second)).sqrt();
    Ok(ContourResult {
        saddle,
        saddle_log_partition: (base + laplace.ln()) / nf,
        log_partition: (base + integral.ln()) / nf,
        nodes: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_eigenvalues_are_exact() {
        // H = cN/2 on the whole sphere, so (1/N) log Z = βc/2.
        for &(n, beta, c) in &[(4usize, 1.0, 0.3), (8, 2.0, -1.0), (50, 0.5, 2.0)] {
            let l = vec![c; n];
            let r = saddle_and_contour(&l, beta).unwrap();
            assert!((r.log_partition - 0.5 * beta * c).abs() < 1e-11, "n={n}");
        }
    }

    #[test]
    fn saddle_is_critical() {
        let l: Vec<f64> = (0..40).map(|i| 2.0 - 0.1 * i as f64).collect();
        for &beta in &[0.01, 0.3, 1.0, 5.0, 100.0] {
            let s = find_saddle(&l, beta).unwrap();
            assert!(s.gamma > l[0]);
            assert!(g_prime(beta, &l, s.gamma).abs() <= 1e-10);
        }
    }

    #[test]
    fn two_level_spectrum_matches_direct_integration() {
        // N = 4 with eigenvalues (a, a, b, b): X₁²+X₂² = 4s where s ~ U(0,1) exactly
        // (the squared norm of half the coordinates on S³ is uniform), so
        // Z = ∫₀¹ exp(2β(a s + b(1−s))) ds.
        let (a, b, beta): (f64, f64, f64) = (1.3, -0.4, 0.9);
        let l = vec![a, a, b, b];
        let k = 2.0 * beta * (a - b);
        let z = (2.0 * beta * b).exp() * k.exp_m1() / k;
        let r = saddle_and_contour(&l, beta).unwrap();
        assert!((r.log_partition - z.ln() / 4.0).abs() < 1e-11);
    }
}
