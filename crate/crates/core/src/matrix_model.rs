//! Spiked GOE instances, their spectra and eigenbasis observables.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::rng;

/// Relative tolerance on `|x|² = N` accepted by [`observe`].
pub const SPHERE_TOL: f64 = 1e-8;

/// A point `(α, θ, N)` of the phase diagram. `β = α/θ` is always derived.
///
/// The null model (no spike, `θ = 0`) has no meaningful `α`; it is built with
/// [`PhasePoint::null`] and carries its inverse temperature directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    alpha: f64,
    theta: f64,
    n: usize,
    null_beta: Option<f64>,
}

impl PhasePoint {
    pub fn new(alpha: f64, theta: f64, n: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(SlabError::domain(format!("alpha must be finite and > 0, got {alpha}")));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(SlabError::domain(format!("theta must be finite and > 0, got {theta}")));
        }
        check_n(n)?;
        Ok(Self { alpha, theta, n, null_beta: None })
    }

    /// Pure GOE at inverse temperature `beta`.
    pub fn null(beta: f64, n: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SlabError::domain(format!("beta must be finite and > 0, got {beta}")));
        }
        check_n(n)?;
        Ok(Self { alpha: 0.0, theta: 0.0, n, null_beta: Some(beta) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        match self.null_beta {
            Some(b) => b,
            None => self.alpha / self.theta,
        }
    }

    pub fn is_null(&self) -> bool {
        self.null_beta.is_some()
    }

    /// Same `(α, θ)` at a different dimension.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Self { n, ..*self })
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 4 {
        return Err(SlabError::domain(format!("n must be at least 4, got {n}")));
    }
    Ok(())
}

/// `M = G + (θ/N) v vᵀ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedInstance {
    n: usize,
    entries: Vec<f64>,
    spike: Vec<f64>,
    theta: f64,
    seed: u64,
}

impl SpikedInstance {
    /// Wraps an explicit symmetric matrix. `spike` must have squared norm `n`.
    pub fn from_parts(entries: Vec<f64>, spike: Vec<f64>, theta: f64, seed: u64) -> Result<Self> {
        let n = spike.len();
        if n == 0 || entries.len() != n * n {
            return Err(SlabError::Contract(format!(
                "matrix has {} entries but spike has length {n}",
                entries.len()
            )));
        }
        let norm2: f64 = spike.iter().map(|x| x * x).sum();
        if ((norm2 - n as f64) / n as f64).abs() > 1e-12 {
            return Err(SlabError::Contract(format!("|v|² = {norm2}, expected {n}")));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(SlabError::Contract(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(SlabError::Contract("matrix has non-finite entries".into()));
        }
        Ok(Self { n, entries, spike, theta, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn spike(&self) -> &[f64] {
        &self.spike
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The noise part `G = M − (θ/N) v vᵀ`, row-major.
    pub fn noise(&self) -> Vec<f64> {
        let n = self.n;
        let s = self.theta / n as f64;
        let mut g = self.entries.clone();
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] -= s * self.spike[i] * self.spike[j];
            }
        }
        g
    }
}

/// Draws `G + (θ/N) v vᵀ`. The spike is drawn first, then the lower triangle
/// of `G` row by row, all from the stream seeded by `seed`.
pub fn sample_spiked_instance(phase: &PhasePoint, seed: u64) -> Result<SpikedInstance> {
    let n = phase.n();
    check_n(n)?;
    let theta = phase.theta();
    if !phase.is_null() && theta <= 0.0 {
        return Err(SlabError::domain("theta must be > 0"));
    }
    let mut rng = rng::stream(seed);
    let spike = uniform_sphere(n, &mut rng);

    let nf = n as f64;
    let off_sd = (1.0 / nf).sqrt();
    let diag_sd = (2.0 / nf).sqrt();
    let s = theta / nf;
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let z: f64 = StandardNormal.sample(&mut rng);
            let g = if i == j { diag_sd * z } else { off_sd * z };
            let m = g + s * spike[i] * spike[j];
            entries[i * n + j] = m;
            entries[j * n + i] = m;
        }
    }
    Ok(SpikedInstance { n, entries, spike, theta, seed })
}

/// A uniform point on the sphere of radius `√n`.
pub fn uniform_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if norm2 > 0.0 {
            let s = (n as f64 / norm2).sqrt();
            x.iter_mut().for_each(|v| *v *= s);
            return x;
        }
    }
}

/// Semicircle distribution function on `[-2, 2]`.
fn semicircle_cdf(x: f64) -> f64 {
    let x = x.clamp(-2.0, 2.0);
    0.5 + x * (4.0 - x * x).sqrt() / (4.0 * std::f64::consts::PI) + (x / 2.0).asin() / std::f64::consts::PI
}

/// Deterministic stand-in for a sampled spectrum: the outlier at its limit
/// `θ + 1/θ` (or the edge 2 when `θ ≤ 1`) followed by the `n - 1` bulk
/// eigenvalues at the semicircle quantiles `1 - (k - ½)/(n - 1)`.
pub fn limiting_lambdas(theta: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(theta > 0.0) {
        return Err(SlabError::domain("limiting spectrum needs n >= 2 and theta > 0"));
    }
    let mut l = Vec::with_capacity(n);
    l.push(if theta > 1.0 { theta + 1.0 / theta } else { 2.0 });
    for k in 1..n {
        let p = 1.0 - (k as f64 - 0.5) / (n - 1) as f64;
        let (mut a, mut b) = (-2.0_f64, 2.0_f64);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if semicircle_cdf(m) < p {
                a = m;
            } else {
                b = m;
            }
        }
        l.push(0.5 * (a + b));
    }
    Ok(l)
}

/// Eigenvalues in descending order and the matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    n: usize,
    lambdas: Vec<f64>,
    /// Column-major: eigenvector `k` occupies `[k*n, (k+1)*n)`.
    eigenvectors: Vec<f64>,
    spike_overlap: f64,
    theta: f64,
    seed: u64,
}

impl Spectrum {
    /// Assembles a spectrum from its parts; used by the cache reader and by
    /// tests that want a prescribed eigenbasis.
    pub fn from_parts(
        lambdas: Vec<f64>,
        eigenvectors: Vec<f64>,
        spike_overlap: f64,
        theta: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = lambdas.len();
        if n == 0 || eigenvectors.len() != n * n {
            return Err(SlabError::Contract("eigenvector matrix has wrong size".into()));
        }
        if lambdas.windows(2).any(|w| !(w[0] >= w[1])) {
            return Err(SlabError::Contract("eigenvalues must be sorted descending".into()));
        }
        Ok(Self { n, lambdas, eigenvectors, spike_overlap, theta, seed })
    }

    /// Diagonal matrix with the given (descending) eigenvalues, identity basis.
    pub fn diagonal(lambdas: Vec<f64>) -> Result<Self> {
        let n = lambdas.len();
        let mut u = vec![0.0; n * n];
        for k in 0..n {
            u[k * n + k] = 1.0;
        }
        Self::from_parts(lambdas, u, 0.0, 0.0, 0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.eigenvectors[k * self.n..(k + 1) * self.n]
    }

    pub fn eigenvectors(&self) -> &[f64] {
        &self.eigenvectors
    }

    /// `⟨u₁, v⟩ / √N`, the cosine between the top eigenvector and the spike.
    pub fn spike_overlap(&self) -> f64 {
        self.spike_overlap
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lambda1(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn lambda2(&self) -> f64 {
        self.lambdas[1]
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambdas[self.n - 1]
    }

    /// `Σ λᵢ uᵢuᵢᵀ`, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for k in 0..n {
            let u = self.eigenvector(k);
            let l = self.lambdas[k];
            for i in 0..n {
                let a = l * u[i];
                let row = &mut m[i * n..(i + 1) * n];
                for (r, &uj) in row.iter_mut().zip(u) {
                    *r += a * uj;
                }
            }
        }
        m
    }

    /// Eigenbasis coordinates of an ambient vector: `Xᵢ = ⟨σ, uᵢ⟩`.
    pub fn to_eigenbasis(&self, sigma: &[f64]) -> Vec<f64> {
        (0..self.n).map(|k| dot(self.eigenvector(k), sigma)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full symmetric eigendecomposition with the sign conventions used
/// throughout: `⟨u₁, v⟩ ≥ 0`, and for `k > 1` the largest-magnitude
/// coordinate of `u_k` is positive.
pub fn eigendecompose(instance: &SpikedInstance) -> Result<Spectrum> {
    let n = instance.n();
    let m = Mat::<f64>::from_fn(n, n, |i, j| instance.entry(i, j));
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| SlabError::numerical(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();

    let mut lambdas = Vec::with_capacity(n);
    let mut vecs = Vec::with_capacity(n * n);
    // faer returns ascending order.
    for k in (0..n).rev() {
        lambdas.push(s[k]);
        let start = vecs.len();
        vecs.extend((0..n).map(|i| u[(i, k)]));
        let col = &mut vecs[start..];
        let flip = if start == 0 {
            dot(col, instance.spike()) < 0.0
        } else {
            let (mut best, mut arg) = (0.0f64, 0usize);
            for (i, &x) in col.iter().enumerate() {
                if x.abs() > best {
                    best = x.abs();
                    arg = i;
                }
            }
            col[arg] < 0.0
        };
        if flip {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
    if lambdas.iter().chain(vecs.iter()).any(|x| !x.is_finite()) {
        return Err(SlabError::numerical("eigensolver produced non-finite output"));
    }
    // Exact sorted order; the solver's order is monotone up to rounding.
    if lambdas.windows(2).any(|w| w[0] < w[1]) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        let l2: Vec<f64> = idx.iter().map(|&k| lambdas[k]).collect();
        let v2: Vec<f64> = idx.iter().flat_map(|&k| vecs[k * n..(k + 1) * n].to_vec()).collect();
        lambdas = l2;
        vecs = v2;
    }
    let overlap = dot(&vecs[..n], instance.spike()) / (n as f64).sqrt();
    Ok(Spectrum {
        n,
        lambdas,
        eigenvectors: vecs,
        spike_overlap: overlap,
        theta: instance.theta(),
        seed: instance.seed(),
    })
}

/// A point on the sphere of radius `√N` in eigenbasis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereState {
    coords: Vec<f64>,
}

impl SphereState {
    /// Rescales `coords` onto the sphere. Fails on the zero vector.
    pub fn from_coords(mut coords: Vec<f64>) -> Result<Self> {
        let norm2: f64 = coords.iter().map(|x| x * x).sum();
        if !(norm2.is_finite() && norm2 > 0.0) {
            return Err(SlabError::Contract("cannot project a zero or non-finite vector".into()));
        }
        let s = (coords.len() as f64 / norm2).sqrt();
        coords.iter_mut().for_each(|x| *x *= s);
        Ok(Self { coords })
    }

    /// Accepts coordinates that are already on the sphere, without rescaling.
    pub fn on_sphere(coords: Vec<f64>) -> Result<Self> {
        check_sphere(&coords)?;
        Ok(Self { coords })
    }

    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self { coords: uniform_sphere(n, rng) }
    }

    /// `√N · e_k`, or its negative.
    pub fn basis(n: usize, k: usize, negative: bool) -> Self {
        let mut coords = vec![0.0; n];
        coords[k] = if negative { -(n as f64).sqrt() } else { (n as f64).sqrt() };
        Self { coords }
    }

    /// `m₁ = m` exactly, remaining coordinates uniform on their sphere.
    pub fn with_top_overlap<R: Rng + ?Sized>(n: usize, m: f64, rng: &mut R) -> Result<Self> {
        if !(-1.0..=1.0).contains(&m) {
            return Err(SlabError::domain(format!("overlap {m} outside [-1, 1]")));
        }
        let nf = n as f64;
        let rest = uniform_sphere(n - 1, rng);
        let scale = ((1.0 - m * m) * nf / (n - 1) as f64).sqrt();
        let mut coords = Vec::with_capacity(n);
        coords.push(m * nf.sqrt());
        coords.extend(rest.into_iter().map(|x| x * scale));
        Ok(Self { coords })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    /// Top overlap `m₁ = X₁/√N`.
    pub fn m1(&self) -> f64 {
        self.coords[0] / (self.n() as f64).sqrt()
    }

    pub fn norm2(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum()
    }

    /// Restores `|X|² = N` exactly (up to rounding).
    pub fn renormalize(&mut self) {
        let s = (self.n() as f64 / self.norm2()).sqrt();
        self.coords.iter_mut().for_each(|x| *x *= s);
    }
}

fn check_sphere(coords: &[f64]) -> Result<()> {
    let n = coords.len() as f64;
    let norm2: f64 = coords.iter().map(|x| x * x).sum();
    if !(((norm2 - n) / n).abs() <= SPHERE_TOL) {
        return Err(SlabError::Contract(format!("state has |x|² = {norm2}, expected {n}")));
    }
    Ok(())
}

/// Energy, normalised energy and overlap vector of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `H = ½ Σ λᵢ Xᵢ²`.
    pub energy: f64,
    /// `h = 2H/N`.
    pub h: f64,
    /// `mᵢ = Xᵢ/√N`.
    pub m: Vec<f64>,
}

pub fn observe(spectrum: &Spectrum, x: &SphereState) -> Result<Observation> {
    if x.n() != spectrum.n() {
        return Err(SlabError::Contract(format!(
            "state dimension {} does not match spectrum dimension {}",
            x.n(),
            spectrum.n()
        )));
    }
    check_sphere(x.coords())?;
    let n = x.n() as f64;
    let energy = 0.5 * dot(spectrum.lambdas(), &x.coords().iter().map(|c| c * c).collect::<Vec<_>>());
    let sn = n.sqrt();
    Ok(Observation {
        energy,
        h: 2.0 * energy / n,
        m: x.coords().iter().map(|c| c / sn).collect(),
    })
}

/// `h(x) = Σ λᵢXᵢ²/N` without the sphere check; used on hot paths.
pub fn normalized_energy(lambdas: &[f64], coords: &[f64]) -> f64 {
    let s: f64 = lambdas.iter().zip(coords).map(|(l, x)| l * x * x).sum();
    s / coords.len() as f64
}
