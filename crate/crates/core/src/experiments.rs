//! Replica ensembles that measure hitting, retention, stationary overlap,
//! mixing, transit rates and equator hits, each against its closed-form
//! prediction.
//!
//! Replica `k` of an experiment with seed `s` always uses the stream seeded by
//! `rng::derive_seed(s, k)`; matrix instances use a separate derivation, so
//! every number in an output can be recomputed from `(spec, seed)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    reflected_simulate, simulate, Crossing, EventSpec, Initialization, IntegratorConfig,
};
use crate::error::{Result, SlabError};
use crate::free_energy::{delta_rate, interpolated_m_marginal, stationary_overlap_prediction, MarginalDensity};
use crate::io::{Cell, Table};
use crate::matrix_model::{eigendecompose, sample_spiked_instance, PhasePoint, SphereState, Spectrum};
use crate::rng;
use crate::stats;
use crate::thresholds::{compute_thresholds, theta_0h, theta_0l, EigenTriple, ThresholdSet};

/// Minimum replica count for any statistical assertion.
pub const MIN_REPLICAS: usize = 30;

const INSTANCE_STREAM: u64 = 0x1257_A2CE;

/// Seed of replica `k`.
pub fn replica_seed(seed: u64, k: u64) -> u64 {
    rng::derive_seed(seed, k)
}

/// Seed of matrix instance `i` for dimension `n` in cell `cell`.
pub fn instance_seed(seed: u64, cell: u64, n: u64, i: u64) -> u64 {
    rng::derive_path(rng::derive_seed(seed, INSTANCE_STREAM), &[cell, n, i])
}

/// Samples and diagonalises one spiked instance.
pub fn instance_spectrum(phase: &PhasePoint, seed: u64) -> Result<Spectrum> {
    eigendecompose(&sample_spiked_instance(phase, seed)?)
}

fn integrator(spectrum: &Spectrum, dt: Option<f64>, t_max: f64, seed: u64) -> IntegratorConfig {
    let mut c = IntegratorConfig::new(spectrum.lambda1(), t_max, seed);
    if let Some(dt) = dt {
        c.dt = dt;
    }
    c
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas < MIN_REPLICAS {
        return Err(SlabError::domain(format!(
            "statistical experiments need at least {MIN_REPLICAS} replicas, got {replicas}"
        )));
    }
    Ok(())
}

fn require_low_temperature_cell(alpha: f64, theta: f64) -> Result<()> {
    let t0 = theta_0l(alpha)?;
    if !(theta > t0) {
        return Err(SlabError::domain(format!(
            "needs theta > theta_0L(alpha) = {t0:.4} at alpha = {alpha}, got theta = {theta}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hitting and retention

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitReplica {
    pub replica: usize,
    pub seed: u64,
    /// First time `|m₁| ≥ m₃`.
    pub tau_m3: Option<f64>,
    /// Time after `tau_m3` at which `|m₁|` first fell to `m₂`, within the hold.
    pub escape_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingRow {
    pub n: usize,
    pub instance_seed: u64,
    pub thresholds: ThresholdSet,
    pub median_tau: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub hits: usize,
    pub within_budget: usize,
    pub censored: usize,
    pub escapes: usize,
    pub hold: f64,
    pub replicas: Vec<HitReplica>,
}

impl HittingRow {
    pub fn budget_fraction(&self) -> f64 {
        self.within_budget as f64 / self.replicas.len() as f64
    }

    /// Escapes among replicas that reached `m₃`.
    pub fn escape_fraction(&self) -> f64 {
        if self.hits == 0 {
            0.0
        } else {
            self.escapes as f64 / self.hits as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingReport {
    pub alpha: f64,
    pub theta: f64,
    pub rows: Vec<HittingRow>,
    /// Median `τ_{m₃}` against `log N`.
    pub fit: Option<stats::LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingParams {
    pub alpha: f64,
    pub theta: f64,
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    /// Time to keep watching after the first `m₃` hit; 0 skips retention.
    pub hold: f64,
    /// Horizon for the first hit; defaults to the `T_hit` budget.
    pub hit_horizon: Option<f64>,
}

/// Runs `replicas` trajectories per `N` from uniform initialisation until
/// `|m₁| ≥ m₃`, then for `hold` more time to detect a drop to `m₂`.
pub fn hitting_and_retention(p: &HittingParams) -> Result<HittingReport> {
    check_replicas(p.replicas)?;
    require_low_temperature_cell(p.alpha, p.theta)?;
    let mut rows = Vec::new();
    for &n in &p.ns {
        let phase = PhasePoint::new(p.alpha, p.theta, n)?;
        let iseed = instance_seed(p.seed, 0, n as u64, 0);
        let spectrum = instance_spectrum(&phase, iseed)?;
        let th = compute_thresholds(&phase, &EigenTriple::from_spectrum(&spectrum)?)?;
        if !th.valid {
            return Err(SlabError::domain(format!("thresholds invalid for the N = {n} instance")));
        }
        let horizon = p.hit_horizon.unwrap_or(th.t_hit);
        let reps: Vec<HitReplica> = (0..p.replicas)
            .into_par_iter()
            .map(|k| {
                let seed = replica_seed(p.seed, k as u64);
                let mut c = integrator(&spectrum, p.dt, horizon, rng::derive_seed(seed, 0));
                c.events = vec![EventSpec::new("m3", Crossing::AbsAtLeast(th.m3))];
                c.stop_on = vec!["m3".into()];
                let rec = simulate(&spectrum, &phase, &c, &Initialization::Uniform)?;
                let tau = rec.event_time("m3");
                let escape = match tau {
                    Some(_) if p.hold > 0.0 => {
                        let mut c2 = integrator(&spectrum, p.dt, p.hold, rng::derive_seed(seed, 1));
                        c2.events = vec![EventSpec::new("escape", Crossing::AbsAtMost(th.m2))];
                        c2.stop_on = vec!["escape".into()];
                        c2.record_stride = usize::MAX / 2;
                        let r2 = simulate(&spectrum, &phase, &c2, &Initialization::Point(rec.final_state))?;
                        r2.event_time("escape")
                    }
                    _ => None,
                };
                Ok(HitReplica { replica: k, seed, tau_m3: tau, escape_after: escape })
            })
            .collect::<Result<_>>()?;
        let taus: Vec<f64> = reps.iter().filter_map(|r| r.tau_m3).collect();
        let hits = taus.len();
        let (median_tau, ci_low, ci_high) = if hits > 0 {
            let (lo, hi) = stats::bootstrap_median_ci(&taus, 0.95, 1000, rng::derive_seed(p.seed, n as u64));
            (Some(stats::median(&taus)), Some(lo), Some(hi))
        } else {
            (None, None, None)
        };
        rows.push(HittingRow {
            n,
            instance_seed: iseed,
            thresholds: th,
            median_tau,
            ci_low,
            ci_high,
            hits,
            within_budget: taus.iter().filter(|t| **t <= th.t_hit).count(),
            censored: p.replicas - hits,
            escapes: reps.iter().filter(|r| r.escape_after.is_some()).count(),
            hold: p.hold,
            replicas: reps,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.median_tau.map(|m| ((r.n as f64).ln(), m)))
        .collect();
    let fit = if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        Some(stats::linear_fit(&x, &y)?)
    } else {
        None
    };
    Ok(HittingReport { alpha: p.alpha, theta: p.theta, rows, fit })
}

impl HittingReport {
    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(&[
            "n", "median_tau_m3", "ci_low", "ci_high", "t_hit_budget", "hits", "within_budget", "censored",
            "escapes", "escape_fraction", "hold", "m2", "m3",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.n.into(),
                r.median_tau.into(),
                r.ci_low.into(),
                r.ci_high.into(),
                r.thresholds.t_hit.into(),
                r.hits.into(),
                r.within_budget.into(),
                r.censored.into(),
                r.escapes.into(),
                r.escape_fraction().into(),
                r.hold.into(),
                r.thresholds.m2.into(),
                r.thresholds.m3.into(),
            ])?;
        }
        Ok(t)
    }
}

/// Null-model control: fraction of replicas whose `|m₁|` reaches `level`
/// within `horizon` for a spikeless GOE at inverse temperature `beta`.
pub fn null_hitting_fraction(beta: f64, n: usize, level: f64, replicas: usize, horizon: f64, seed: u64) -> Result<f64> {
    let phase = PhasePoint::null(beta, n)?;
    let spectrum = instance_spectrum(&phase, instance_seed(seed, u64::MAX, n as u64, 0))?;
    let hits: usize = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let mut c = integrator(&spectrum, None, horizon, replica_seed(seed, k as u64));
            c.events = vec![EventSpec::new("hit", Crossing::AbsAtLeast(level))];
            c.stop_on = vec!["hit".into()];
            let rec = simulate(&spectrum, &phase, &c, &Initialization::Uniform)?;
            Ok(usize::from(rec.event_time("hit").is_some()))
        })
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / replicas as f64)
}

// ---------------------------------------------------------------------------
// Stationary overlap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapParams {
    pub alpha: f64,
    pub theta: f64,
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    pub burn_in: f64,
    /// Averaging window after burn-in.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub n: usize,
    pub mean_r: f64,
    pub ci_half_width: f64,
    /// Time-variance of `m₁²` averaged over replicas, times `N`.
    pub var_r_times_n: f64,
    pub predicted_mean: f64,
    pub predicted_var_times_n: f64,
    /// First and second halves of the window agree within 3 standard errors.
    pub stationary: bool,
}

/// Time averages of `R = m₁²` after burn-in from uniform initialisation.
pub fn stationary_overlap(p: &OverlapParams) -> Result<Vec<OverlapRow>> {
    check_replicas(p.replicas)?;
    let mut rows = Vec::new();
    for &n in &p.ns {
        let phase = PhasePoint::new(p.alpha, p.theta, n)?;
        let pred = stationary_overlap_prediction(&phase)?;
        let spectrum = instance_spectrum(&phase, instance_seed(p.seed, 0, n as u64, 0))?;
        let per: Vec<(f64, f64, f64, f64)> = (0..p.replicas)
            .into_par_iter()
            .map(|k| {
                let mut c = integrator(&spectrum, p.dt, p.burn_in + p.window, replica_seed(p.seed, k as u64));
                c.record_stride = 10;
                let rec = simulate(&spectrum, &phase, &c, &Initialization::Uniform)?;
                let r: Vec<f64> = rec
                    .times
                    .iter()
                    .zip(&rec.m1)
                    .filter(|(t, _)| **t >= p.burn_in)
                    .map(|(_, m)| m * m)
                    .collect();
                if r.len() < 4 {
                    return Err(SlabError::domain("averaging window too short for the record stride"));
                }
                let half = r.len() / 2;
                Ok((stats::mean(&r), stats::variance(&r), stats::mean(&r[..half]), stats::mean(&r[half..])))
            })
            .collect::<Result<_>>()?;
        let means: Vec<f64> = per.iter().map(|x| x.0).collect();
        let firsts: Vec<f64> = per.iter().map(|x| x.2).collect();
        let seconds: Vec<f64> = per.iter().map(|x| x.3).collect();
        let r = p.replicas as f64;
        let se = (stats::variance(&means) / r).sqrt();
        let diffs: Vec<f64> = firsts.iter().zip(&seconds).map(|(a, b)| a - b).collect();
        let diff_se = (stats::variance(&diffs) / r).sqrt();
        rows.push(OverlapRow {
            n,
            mean_r: stats::mean(&means),
            ci_half_width: 1.96 * se,
            var_r_times_n: stats::mean(&per.iter().map(|x| x.1).collect::<Vec<_>>()) * n as f64,
            predicted_mean: pred.mean,
            predicted_var_times_n: pred.variance * n as f64,
            stationary: stats::mean(&diffs).abs() <= 3.0 * diff_se.max(1e-15),
        });
    }
    Ok(rows)
}

pub fn overlap_table(rows: &[OverlapRow]) -> Result<Table> {
    let mut t = Table::new(&[
        "n", "mean_r", "ci_half_width", "var_r_times_n", "predicted_mean", "predicted_var_times_n", "stationary",
    ]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.mean_r.into(),
            r.ci_half_width.into(),
            r.var_r_times_n.into(),
            r.predicted_mean.into(),
            r.predicted_var_times_n.into(),
            r.stationary.into(),
        ])?;
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Projected total variation

/// Named initial laws for mixing experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Uniform,
    Equator,
    /// `√N·u₁`.
    Top,
    /// `−√N·u₁`.
    MinusTop,
    UniformHalf,
}

impl InitKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Equator => "equator",
            Self::Top => "top",
            Self::MinusTop => "minus_top",
            Self::UniformHalf => "uniform_half",
        }
    }

    fn initialization(self, n: usize) -> Initialization {
        match self {
            Self::Uniform => Initialization::Uniform,
            Self::Equator => Initialization::Equator,
            Self::Top => Initialization::Point(SphereState::basis(n, 0, false)),
            Self::MinusTop => Initialization::Point(SphereState::basis(n, 0, true)),
            Self::UniformHalf => Initialization::UniformHalf,
        }
    }

    /// Starts confined to one side of the equator.
    pub fn one_sided(self) -> bool {
        matches!(self, Self::Top | Self::MinusTop | Self::UniformHalf)
    }
}

/// Projected TV `d̂(t)` between the replica histogram of `m₁(X_t)` and the
/// exact stationary law of `m₁`. By the projection inequality this is a lower
/// bound on the full-state total variation distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingEstimate {
    pub init: String,
    pub n: usize,
    pub replicas: usize,
    pub times: Vec<f64>,
    pub d_full: Vec<f64>,
    /// Against the law conditioned on `m₁ ≥ 0` (reflected for `minus_top`).
    pub d_half: Option<Vec<f64>>,
    /// First recorded time with `d̂ ≤ ¼`.
    pub t_mix_est: Option<f64>,
    pub t_mix_half: Option<f64>,
    /// `t_mix_est` was not reached within the horizon.
    pub censored: bool,
    /// Some bin inside the sample range expected fewer than 5 samples at
    /// `t_mix_est` (or at the horizon when censored).
    pub undersampled: bool,
    pub lower_bound: bool,
}

impl MixingEstimate {
    /// Largest `d̂` at or after `t`.
    pub fn max_after(&self, t: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.d_full)
            .filter(|(s, _)| **s >= t)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    }

    /// Smallest `d̂` at or after `t`.
    pub fn min_after(&self, t: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.d_full)
            .filter(|(s, _)| **s >= t)
            .map(|(_, d)| *d)
            .fold(1.0, f64::min)
    }

    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(&["init", "t", "d_full", "d_half"]);
        for (i, &time) in self.times.iter().enumerate() {
            t.push(vec![
                self.init.as_str().into(),
                time.into(),
                self.d_full[i].into(),
                self.d_half.as_ref().map(|d| d[i]).into(),
            ])?;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingParams {
    pub alpha: f64,
    pub theta: f64,
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    pub horizon: f64,
    pub inits: Vec<InitKind>,
    /// Number of recorded times along the horizon.
    pub frames: usize,
    /// Grid intervals for the exact marginal.
    pub grid: usize,
}

impl MixingParams {
    pub fn new(alpha: f64, theta: f64, n: usize, replicas: usize, horizon: f64, seed: u64) -> Self {
        Self {
            alpha,
            theta,
            n,
            replicas,
            seed,
            dt: None,
            horizon,
            inits: vec![InitKind::Uniform],
            frames: 200,
            grid: 8000,
        }
    }
}

/// Exact stationary law of `m₁` for a spectrum, on an even grid of `[−1, 1]`.
pub fn stationary_marginal(spectrum: &Spectrum, beta: f64, grid: usize) -> Result<MarginalDensity> {
    let g = crate::free_energy::overlap_grid(grid);
    interpolated_m_marginal(spectrum.lambdas(), beta, &g, 400)
}

struct Reference {
    full: MarginalDensity,
    half: MarginalDensity,
}

fn projected_tv(samples: &[f64], reference: &MarginalDensity) -> (f64, Vec<f64>, Vec<f64>) {
    let edges = stats::fd_edges_unit(samples, 4096);
    let counts = stats::histogram(samples, &edges);
    let probs = reference.bin_probabilities(&edges);
    (stats::tv_counts_vs_probs(&counts, &probs), edges, probs)
}

fn undersampled(samples: &[f64], edges: &[f64], probs: &[f64]) -> bool {
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let r = samples.len() as f64;
    edges
        .windows(2)
        .zip(probs)
        .any(|(w, p)| w[1] > lo && w[0] < hi && r * p < 5.0)
}

fn mixing_for_init(
    spectrum: &Spectrum,
    phase: &PhasePoint,
    p: &MixingParams,
    init: InitKind,
    reference: &Reference,
) -> Result<MixingEstimate> {
    let n = spectrum.n();
    let base = integrator(spectrum, p.dt, p.horizon, 0);
    let steps = (p.horizon / base.dt).round().max(1.0) as usize;
    let stride = (steps / p.frames.max(1)).max(1);
    let recs: Vec<(Vec<f64>, Vec<f64>)> = (0..p.replicas)
        .into_par_iter()
        .map(|k| {
            let mut c = base.clone();
            c.seed = replica_seed(p.seed, k as u64);
            c.record_stride = stride;
            let r = simulate(spectrum, phase, &c, &init.initialization(n))?;
            Ok((r.times, r.m1))
        })
        .collect::<Result<_>>()?;
    let frames = recs.iter().map(|r| r.1.len()).min().unwrap_or(0);
    let times: Vec<f64> = recs[0].0[..frames].to_vec();
    let paths: Vec<Vec<f64>> = recs.into_iter().map(|r| r.1).collect();
    let mut d_full = Vec::with_capacity(frames);
    let mut d_half = Vec::with_capacity(frames);
    let mut flags = Vec::with_capacity(frames);
    let flip = if init == InitKind::MinusTop { -1.0 } else { 1.0 };
    for i in 0..frames {
        let s: Vec<f64> = paths.iter().map(|m| m[i]).collect();
        let (d, edges, probs) = projected_tv(&s, &reference.full);
        flags.push(undersampled(&s, &edges, &probs));
        d_full.push(d);
        if init.one_sided() {
            let sh: Vec<f64> = s.iter().map(|m| flip * m).collect();
            d_half.push(projected_tv(&sh, &reference.half).0);
        }
    }
    let first = |d: &[f64]| d.iter().position(|v| *v <= 0.25).map(|i| times[i]);
    let t_mix_est = first(&d_full);
    let at = t_mix_est.and_then(|t| times.iter().position(|s| *s == t)).unwrap_or(frames.saturating_sub(1));
    Ok(MixingEstimate {
        init: init.label().to_string(),
        n,
        replicas: p.replicas,
        t_mix_half: if init.one_sided() { first(&d_half) } else { None },
        d_half: init.one_sided().then_some(d_half),
        times,
        d_full,
        t_mix_est,
        censored: t_mix_est.is_none(),
        undersampled: flags.get(at).copied().unwrap_or(false),
        lower_bound: true,
    })
}

/// Mixing estimates for each requested initialisation on one instance.
pub fn projected_tv_mixing(p: &MixingParams) -> Result<Vec<MixingEstimate>> {
    check_replicas(p.replicas)?;
    let phase = PhasePoint::new(p.alpha, p.theta, p.n)?;
    let spectrum = instance_spectrum(&phase, instance_seed(p.seed, 0, p.n as u64, 0))?;
    projected_tv_mixing_on(&spectrum, &phase, p)
}

/// As [`projected_tv_mixing`] on a given spectrum.
pub fn projected_tv_mixing_on(spectrum: &Spectrum, phase: &PhasePoint, p: &MixingParams) -> Result<Vec<MixingEstimate>> {
    check_replicas(p.replicas)?;
    let full = stationary_marginal(spectrum, phase.beta(), p.grid)?;
    let half = full.positive_half()?;
    let reference = Reference { full, half };
    p.inits.iter().map(|&i| mixing_for_init(spectrum, phase, p, i, &reference)).collect()
}

/// Projected TV between two empirical samples of `(m₁, h)`: on `m₁` alone
/// and on the product partition `(m₁ bins) × (h bins)`. The product refines
/// the `m₁` partition, so the first never exceeds the second.
pub fn projection_check(a: &[(f64, f64)], b: &[(f64, f64)], h_bins: usize) -> (f64, f64) {
    let m: Vec<f64> = a.iter().chain(b).map(|x| x.0).collect();
    let edges = stats::fd_edges_unit(&m, 4096);
    let hs: Vec<f64> = a.iter().chain(b).map(|x| x.1).collect();
    let (hlo, hhi) = (
        hs.iter().cloned().fold(f64::INFINITY, f64::min),
        hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let k = edges.len() - 1;
    let hb = h_bins.max(1);
    let cell = |x: &(f64, f64)| -> (usize, usize) {
        let i = edges.partition_point(|e| *e <= x.0).saturating_sub(1).min(k - 1);
        let j = if hhi > hlo { (((x.1 - hlo) / (hhi - hlo)) * hb as f64) as usize } else { 0 };
        (i, j.min(hb - 1))
    };
    let mut ca = vec![0usize; k * hb];
    let mut cb = vec![0usize; k * hb];
    a.iter().for_each(|x| {
        let (i, j) = cell(x);
        ca[i * hb + j] += 1;
    });
    b.iter().for_each(|x| {
        let (i, j) = cell(x);
        cb[i * hb + j] += 1;
    });
    let marg = |c: &[usize]| (0..k).map(|i| c[i * hb..(i + 1) * hb].iter().sum()).collect::<Vec<usize>>();
    (stats::tv_counts(&marg(&ca), &marg(&cb)), stats::tv_counts(&ca, &cb))
}

// ---------------------------------------------------------------------------
// Transit rate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitParams {
    pub alpha: f64,
    pub theta: f64,
    pub ns: Vec<usize>,
    /// Transits per `N`, spread evenly over `instances` matrices.
    pub transits: usize,
    pub instances: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    /// Horizon of a single transit attempt.
    pub max_time: f64,
    /// Burn-in on the half-sphere in units of the symmetric mixing estimate.
    pub burn_factor: f64,
    pub mixing_replicas: usize,
    pub mixing_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitRow {
    pub n: usize,
    /// Mean over completed transits; a lower bound when `censored > 0`.
    pub mean_tau: f64,
    pub stderr: f64,
    pub completed: usize,
    pub censored: usize,
    pub mean_t_mix_est: f64,
    pub mixing_censored: usize,
    pub instance_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitReport {
    pub alpha: f64,
    pub theta: f64,
    pub delta: f64,
    pub rows: Vec<TransitRow>,
    /// `log(mean τ)` against `N`, over uncensored cells.
    pub fit: Option<stats::LinearFit>,
    pub excluded: Vec<usize>,
    pub warnings: Vec<String>,
}

impl TransitReport {
    pub fn slope_in_bracket(&self) -> bool {
        self.fit.is_some_and(|f| f.slope >= 0.5 * self.delta && f.slope <= 1.5 * self.delta)
    }

    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(&[
            "n", "mean_tau", "stderr", "completed", "censored", "mean_t_mix_est", "log_mean_tau", "delta",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.n.into(),
                r.mean_tau.into(),
                r.stderr.into(),
                r.completed.into(),
                r.censored.into(),
                r.mean_t_mix_est.into(),
                r.mean_tau.ln().into(),
                self.delta.into(),
            ])?;
        }
        Ok(t)
    }
}

/// Mean first time `m₁` reaches zero, starting from a reflected-dynamics
/// burn-in on the half-sphere, as a function of `N`.
pub fn transit_rate(p: &TransitParams) -> Result<TransitReport> {
    if !(p.alpha > 1.0) {
        return Err(SlabError::domain("transit requires alpha > 1"));
    }
    check_replicas(p.transits)?;
    check_replicas(p.mixing_replicas)?;
    if p.instances == 0 {
        return Err(SlabError::domain("instances must be >= 1"));
    }
    let delta = delta_rate(&PhasePoint::new(p.alpha, p.theta, 8)?)?;
    let per_instance = p.transits.div_ceil(p.instances);
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &n in &p.ns {
        let phase = PhasePoint::new(p.alpha, p.theta, n)?;
        let mut taus = Vec::new();
        let mut censored = 0usize;
        let mut tmix = Vec::new();
        let mut mixing_censored = 0usize;
        let mut seeds = Vec::new();
        for i in 0..p.instances {
            let iseed = instance_seed(p.seed, 0, n as u64, i as u64);
            seeds.push(iseed);
            let spectrum = instance_spectrum(&phase, iseed)?;
            let mut mp = MixingParams::new(p.alpha, p.theta, n, p.mixing_replicas, p.mixing_horizon, rng::derive_seed(iseed, 1));
            mp.dt = p.dt;
            mp.grid = 2000;
            let est = projected_tv_mixing_on(&spectrum, &phase, &mp)?.remove(0);
            let t_mix = est.t_mix_est.unwrap_or_else(|| {
                mixing_censored += 1;
                p.mixing_horizon
            });
            tmix.push(t_mix);
            let burn = p.burn_factor * t_mix;
            let out: Vec<Option<f64>> = (0..per_instance)
                .into_par_iter()
                .map(|k| {
                    let seed = replica_seed(iseed, k as u64);
                    let mut c = integrator(&spectrum, p.dt, burn, rng::derive_seed(seed, 0));
                    c.record_stride = usize::MAX / 2;
                    let warm = reflected_simulate(&spectrum, &phase, &c, &Initialization::UniformHalf)?;
                    let mut c2 = integrator(&spectrum, p.dt, p.max_time, rng::derive_seed(seed, 1));
                    c2.record_stride = usize::MAX / 2;
                    c2.events = vec![EventSpec::new("zero", Crossing::Zero)];
                    c2.stop_on = vec!["zero".into()];
                    let run = simulate(&spectrum, &phase, &c2, &Initialization::Point(warm.final_state))?;
                    Ok(run.event_time("zero"))
                })
                .collect::<Result<_>>()?;
            for o in out {
                match o {
                    Some(t) => taus.push(t),
                    None => censored += 1,
                }
            }
        }
        let completed = taus.len();
        // Censored attempts count at the horizon, giving a lower bound.
        let all: Vec<f64> = taus.iter().cloned().chain(std::iter::repeat_n(p.max_time, censored)).collect();
        if censored > 0 {
            warnings.push(format!("N = {n}: {censored} transits censored at t = {}; cell excluded from fit", p.max_time));
        }
        if mixing_censored > 0 {
            warnings.push(format!("N = {n}: symmetric mixing not reached on {mixing_censored} instance(s)"));
        }
        rows.push(TransitRow {
            n,
            mean_tau: stats::mean(&all),
            stderr: (stats::variance(&all) / all.len() as f64).sqrt(),
            completed,
            censored,
            mean_t_mix_est: stats::mean(&tmix),
            mixing_censored,
            instance_seeds: seeds,
        });
    }
    let used: Vec<&TransitRow> = rows.iter().filter(|r| r.censored == 0).collect();
    let excluded = rows.iter().filter(|r| r.censored > 0).map(|r| r.n).collect();
    let fit = if used.len() >= 2 {
        let x: Vec<f64> = used.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = used.iter().map(|r| r.mean_tau.ln()).collect();
        Some(stats::linear_fit(&x, &y)?)
    } else {
        None
    };
    Ok(TransitReport { alpha: p.alpha, theta: p.theta, delta, rows, fit, excluded, warnings })
}

// ---------------------------------------------------------------------------
// Equator hits

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquatorParams {
    pub alpha: f64,
    pub theta: f64,
    pub n: usize,
    pub epsilon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquatorResult {
    pub n: usize,
    pub epsilon: f64,
    pub probability: f64,
    pub hits: usize,
    pub replicas: usize,
    /// `λ₁ − λ_N − (1/β)(1 − 2/N)`.
    pub c_const: f64,
    /// `exp(−5βCNε)`.
    pub bound: f64,
}

impl EquatorResult {
    /// Whether the hit fraction is at least the bound up to three binomial
    /// standard errors; a bound far below `1/replicas` cannot be resolved.
    pub fn consistent_with_bound(&self) -> bool {
        let se = (self.bound * (1.0 - self.bound) / self.replicas as f64).sqrt();
        self.probability >= self.bound - 3.0 * se
    }
}

/// Probability that `m₁` reaches zero within unit time from `m₁ = ε`.
pub fn equator_hit(p: &EquatorParams) -> Result<EquatorResult> {
    check_replicas(p.replicas)?;
    if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
        return Err(SlabError::domain("epsilon must lie in (0, 1)"));
    }
    let phase = PhasePoint::new(p.alpha, p.theta, p.n)?;
    let spectrum = instance_spectrum(&phase, instance_seed(p.seed, 0, p.n as u64, 0))?;
    let beta = phase.beta();
    let nf = p.n as f64;
    let c_const = spectrum.lambda1() - spectrum.lambda_n() - (1.0 - 2.0 / nf) / beta;
    let hits: usize = (0..p.replicas)
        .into_par_iter()
        .map(|k| {
            let mut c = integrator(&spectrum, p.dt, 1.0, replica_seed(p.seed, k as u64));
            c.events = vec![EventSpec::new("zero", Crossing::Zero)];
            c.stop_on = vec!["zero".into()];
            c.record_stride = usize::MAX / 2;
            let rec = simulate(&spectrum, &phase, &c, &Initialization::PlusCap(p.epsilon))?;
            Ok(usize::from(rec.event_time("zero").is_some()))
        })
        .sum::<Result<usize>>()?;
    Ok(EquatorResult {
        n: p.n,
        epsilon: p.epsilon,
        probability: hits as f64 / p.replicas as f64,
        hits,
        replicas: p.replicas,
        c_const,
        bound: (-5.0 * beta * c_const * nf * p.epsilon).exp(),
    })
}

// ---------------------------------------------------------------------------
// Phase diagram

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HighTFast,
    LowTSymmetricFast,
    Unresolved,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Self::HighTFast => "high_T_fast",
            Self::LowTSymmetricFast => "low_T_symmetric_fast",
            Self::Unresolved => "unresolved",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCell {
    pub alpha: f64,
    pub theta: f64,
    pub regime: Regime,
    pub m_e: Option<f64>,
    pub m_be: Option<f64>,
    pub m_pi: f64,
    pub valid: bool,
    pub theta_0l: Option<f64>,
    pub theta_0h: Option<f64>,
    pub delta: Option<f64>,
}

/// Classifies one `(α, θ)` cell using limiting eigenvalues.
pub fn classify(alpha: f64, theta: f64) -> Result<PhaseCell> {
    let phase = PhasePoint::new(alpha, theta, 1000)?;
    let t0l = if alpha > 1.0 { Some(theta_0l(alpha)?) } else { None };
    let t0h = if alpha < 1.0 { Some(theta_0h(alpha)?) } else { None };
    let th = if theta > 1.0 {
        compute_thresholds(&phase, &EigenTriple::limiting(theta)?).ok()
    } else {
        None
    };
    let regime = match (t0h, t0l) {
        (Some(h), _) if theta > h => Regime::HighTFast,
        (_, Some(l)) if theta > l => Regime::LowTSymmetricFast,
        _ => Regime::Unresolved,
    };
    let delta = if alpha > 1.0 && theta > 1.0 { Some(delta_rate(&phase)?) } else { None };
    Ok(PhaseCell {
        alpha,
        theta,
        regime,
        m_e: th.map(|t| t.m_e),
        m_be: th.map(|t| t.m_be),
        m_pi: crate::thresholds::m_pi(&phase),
        valid: th.is_some_and(|t| t.valid),
        theta_0l: t0l,
        theta_0h: t0h,
        delta,
    })
}

pub fn phase_diagram(alphas: &[f64], thetas: &[f64]) -> Result<Vec<PhaseCell>> {
    let mut out = Vec::with_capacity(alphas.len() * thetas.len());
    for &a in alphas {
        for &t in thetas {
            out.push(classify(a, t)?);
        }
    }
    Ok(out)
}

pub fn phase_table(cells: &[PhaseCell]) -> Result<Table> {
    let mut t = Table::new(&[
        "alpha", "theta", "m_e", "m_be", "m_pi", "valid", "theta_0L", "delta", "theta_0H", "regime",
    ]);
    for c in cells {
        t.push(vec![
            c.alpha.into(),
            c.theta.into(),
            c.m_e.into(),
            c.m_be.into(),
            c.m_pi.into(),
            c.valid.into(),
            c.theta_0l.into(),
            c.delta.into(),
            c.theta_0h.into(),
            Cell::from(c.regime.label()),
        ])?;
    }
    Ok(t)
}
