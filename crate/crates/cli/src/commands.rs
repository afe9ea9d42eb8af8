//! One function per command. Each writes its result files into `out` and
//! records them, plus seeds and assertion outcomes, in the manifest.

use std::path::Path;

use slab_core::dynamics::{simulate, standard_events, Initialization, IntegratorConfig};
use slab_core::experiments::{
    self as exp, EquatorParams, HittingParams, InitKind, MixingParams, OverlapParams, TransitParams,
};
use slab_core::free_energy::{closed_form_report, monte_carlo_log_partition, saddle_and_contour};
use slab_core::io::{write_csv, write_json, write_spectrum, write_trajectory, Cell, Manifest, Table};
use slab_core::thresholds::{compute_thresholds, EigenTriple};
use slab_core::{Result, SlabError, SphereState};

use crate::config::{kind_name, Command, Eigenvalues, InitName, RunConfig, SweepKind};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    pub manifest: &'a mut Manifest,
}

impl Ctx<'_> {
    fn csv(&mut self, name: &str, t: &Table) -> Result<()> {
        write_csv(&self.out.join(name), t)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        write_json(&self.out.join(name), v)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn seed(&mut self, name: impl Into<String>, s: u64) {
        self.manifest.seeds.push((name.into(), s));
    }

    fn replica_seeds(&mut self, base: u64, replicas: usize) {
        for k in 0..replicas {
            self.seed(format!("replica/{k}"), exp::replica_seed(base, k as u64));
        }
    }

    fn assert(&mut self, name: impl Into<String>, ok: bool) {
        if self.cfg.assertions.unwrap_or(false) {
            self.manifest.assertions.push((name.into(), ok));
        }
    }
}

pub fn dispatch(command: Command, ctx: &mut Ctx) -> Result<()> {
    match command {
        Command::Generate => generate(ctx),
        Command::Thresholds => thresholds(ctx),
        Command::FreeEnergy => free_energy(ctx),
        Command::Simulate => simulate_cmd(ctx),
        Command::Mixing => {
            let (a, t) = (ctx.cfg.alpha()?, ctx.cfg.theta()?);
            mixing(ctx, a, t, ctx.cfg.n()?, "mixing.csv")
        }
        Command::Transit => {
            let (a, t) = (ctx.cfg.alpha()?, ctx.cfg.theta()?);
            transit(ctx, a, t, "transit.csv")
        }
        Command::Sweep => sweep(ctx),
    }
}

fn generate(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.cfg.n()?;
    let phase = ctx.cfg.phase(n)?;
    let seed = ctx.cfg.seed();
    ctx.seed("instance", seed);
    let spectrum = exp::instance_spectrum(&phase, seed)?;
    write_spectrum(&ctx.out.join("spectrum.bin"), &spectrum)?;
    ctx.manifest.outputs.push("spectrum.bin".into());
    let mut t = Table::new(&["k", "lambda"]);
    for (k, l) in spectrum.lambdas().iter().enumerate() {
        t.push(vec![(k + 1).into(), (*l).into()])?;
    }
    ctx.csv("eigenvalues.csv", &t)?;
    ctx.json(
        "summary.json",
        &serde_json::json!({
            "n": n,
            "lambda1": spectrum.lambda1(),
            "lambda2": spectrum.lambda2(),
            "lambda_n": spectrum.lambda_n(),
            "spike_overlap": spectrum.spike_overlap(),
        }),
    )
}

fn thresholds(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let (n, eig) = match cfg.eigenvalues.unwrap_or(Eigenvalues::Limiting) {
        Eigenvalues::Limiting => (cfg.n.unwrap_or(1000), EigenTriple::limiting(cfg.theta()?)?),
        Eigenvalues::Sampled => {
            let n = cfg.n()?;
            ctx.seed("instance", cfg.seed());
            let s = exp::instance_spectrum(&cfg.phase(n)?, cfg.seed())?;
            (n, EigenTriple::from_spectrum(&s)?)
        }
    };
    let th = compute_thresholds(&cfg.phase(n)?, &eig)?;
    let mut t = Table::new(&[
        "alpha", "theta", "n", "beta", "lambda1", "lambda2", "lambda_n", "m_be", "m1", "m2", "m3", "m_e", "m_pi",
        "c_e", "kappa_be", "t_hit", "valid",
    ]);
    t.push(vec![
        cfg.alpha()?.into(),
        cfg.theta()?.into(),
        n.into(),
        th.beta.into(),
        eig.lambda1.into(),
        eig.lambda2.into(),
        eig.lambda_n.into(),
        th.m_be.into(),
        th.m1.into(),
        th.m2.into(),
        th.m3.into(),
        th.m_e.into(),
        th.m_pi.into(),
        th.c_e.into(),
        th.kappa_be.into(),
        th.t_hit.into(),
        th.valid.into(),
    ])?;
    ctx.csv("thresholds.csv", &t)
}

fn free_energy(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let phase = cfg.phase(cfg.n.unwrap_or(1000))?;
    let k = cfg.q_points.unwrap_or(100).max(2);
    let q: Vec<f64> = (0..k).map(|i| 0.999 * i as f64 / (k - 1) as f64).collect();
    let mut report = closed_form_report(&phase, &q)?;
    if cfg.contour.unwrap_or(false) || cfg.mc_samples.is_some() {
        let n = cfg.n()?;
        ctx.seed("instance", cfg.seed());
        let s = exp::instance_spectrum(&phase, cfg.seed())?;
        let c = saddle_and_contour(s.lambdas(), phase.beta())?;
        report.contour_value = Some(c.log_partition);
        report.saddle_value = Some(c.saddle_log_partition);
        if let Some(m) = cfg.mc_samples {
            let mseed = slab_core::rng::derive_seed(cfg.seed(), n as u64);
            ctx.seed("monte_carlo", mseed);
            let mc = monte_carlo_log_partition(s.lambdas(), phase.beta(), m, mseed)?;
            report.mc_value = Some(mc.value);
            report.mc_stderr = Some(mc.stderr);
        }
    }
    let mut t = Table::new(&["q", "f_band"]);
    for &(q, f) in &report.band_profile {
        t.push(vec![q.into(), f.into()])?;
    }
    ctx.csv("band_profile.csv", &t)?;
    ctx.json(
        "free_energy.json",
        &serde_json::json!({
            "alpha": phase.alpha(),
            "theta": phase.theta(),
            "beta": phase.beta(),
            "closed_form": report.closed_form,
            "delta": report.delta,
            "contour_value": report.contour_value,
            "saddle_value": report.saddle_value,
            "mc_value": report.mc_value,
            "mc_stderr": report.mc_stderr,
        }),
    )
}

fn simulate_cmd(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let n = cfg.n()?;
    let phase = cfg.phase(n)?;
    let seed = cfg.seed();
    let iseed = exp::instance_seed(seed, 0, n as u64, 0);
    let rseed = exp::replica_seed(seed, 0);
    ctx.seed("instance", iseed);
    ctx.seed("replica/0", rseed);
    let spectrum = exp::instance_spectrum(&phase, iseed)?;
    let mut c = IntegratorConfig::new(spectrum.lambda1(), cfg.t_max.unwrap_or(10.0), rseed);
    if let Some(dt) = cfg.dt {
        c.dt = dt;
    }
    if let Some(s) = cfg.record_stride {
        c.record_stride = s;
    }
    if let Ok(th) = compute_thresholds(&phase, &EigenTriple::from_spectrum(&spectrum)?) {
        if th.valid {
            c.events = standard_events(&th);
        }
    }
    let init = match cfg.init.unwrap_or(InitName::Uniform) {
        InitName::Uniform => Initialization::Uniform,
        InitName::Equator => Initialization::Equator,
        InitName::Top => Initialization::Point(SphereState::basis(n, 0, false)),
        InitName::MinusTop => Initialization::Point(SphereState::basis(n, 0, true)),
        InitName::UniformHalf => Initialization::UniformHalf,
        InitName::PlusCap => Initialization::PlusCap(cfg.epsilon.unwrap_or(0.0)),
    };
    let rec = simulate(&spectrum, &phase, &c, &init)?;
    write_trajectory(&ctx.out.join("trajectory.csv"), &ctx.out.join("events.json"), &rec)?;
    ctx.manifest.outputs.extend(["trajectory.csv".into(), "events.json".into()]);
    ctx.manifest.config["dt"] = c.dt.into();
    ctx.manifest.config["record_stride"] = c.record_stride.into();
    Ok(())
}

/// Prepends `alpha, theta` columns so several cells share one CSV.
fn with_cell(t: Table, alpha: f64, theta: f64, into: &mut Option<Table>) -> Result<()> {
    let dst = into.get_or_insert_with(|| {
        let mut h = vec!["alpha", "theta"];
        h.extend(t.header.iter().map(String::as_str));
        Table::new(&h)
    });
    for r in t.rows {
        let mut row: Vec<Cell> = vec![alpha.into(), theta.into()];
        row.extend(r);
        dst.push(row)?;
    }
    Ok(())
}

fn mixing(ctx: &mut Ctx, alpha: f64, theta: f64, n: usize, name: &str) -> Result<()> {
    let cfg = ctx.cfg;
    let mut p = MixingParams::new(alpha, theta, n, cfg.replicas.unwrap_or(0), cfg.horizon.unwrap_or(0.0), cfg.seed());
    p.dt = cfg.dt;
    if let Some(i) = &cfg.inits {
        p.inits = i.clone();
    }
    if let Some(f) = cfg.frames {
        p.frames = f;
    }
    if let Some(g) = cfg.grid {
        p.grid = g;
    }
    ctx.seed(format!("instance/{alpha}/{theta}/{n}"), exp::instance_seed(p.seed, 0, n as u64, 0));
    ctx.replica_seeds(p.seed, p.replicas);
    let est = exp::projected_tv_mixing(&p)?;
    let mut table: Option<Table> = None;
    for e in &est {
        with_cell(e.table()?, alpha, theta, &mut table)?;
        if e.undersampled {
            ctx.manifest.errors.push(format!("{}: histogram undersampled (expected bin count < 5)", e.init));
        }
        if e.init == InitKind::Uniform.label() {
            ctx.assert(format!("mixing/{alpha}/{theta}/{n}/uniform_reaches_quarter"), !e.censored);
        }
    }
    let summary: Vec<_> = est
        .iter()
        .map(|e| {
            serde_json::json!({
                "alpha": alpha, "theta": theta, "n": n, "init": e.init,
                "t_mix_est": e.t_mix_est, "t_mix_half": e.t_mix_half,
                "censored": e.censored, "undersampled": e.undersampled,
                "note": "projected TV on m1: a lower bound on full-state total variation",
            })
        })
        .collect();
    ctx.csv(name, &table.unwrap_or_else(|| Table::new(&["alpha", "theta", "init", "t", "d_full", "d_half"])))?;
    ctx.json(&name.replace(".csv", "_summary.json"), &summary)
}

fn transit(ctx: &mut Ctx, alpha: f64, theta: f64, name: &str) -> Result<()> {
    let cfg = ctx.cfg;
    let p = TransitParams {
        alpha,
        theta,
        ns: cfg.ns()?,
        transits: cfg.transits.unwrap_or(0),
        instances: cfg.instances.unwrap_or(1),
        seed: cfg.seed(),
        dt: cfg.dt,
        max_time: cfg.max_time.unwrap_or(0.0),
        burn_factor: cfg.burn_factor.unwrap_or(10.0),
        mixing_replicas: cfg.mixing_replicas.unwrap_or(exp::MIN_REPLICAS),
        mixing_horizon: cfg.mixing_horizon.unwrap_or(50.0),
    };
    let r = exp::transit_rate(&p)?;
    for row in &r.rows {
        for (i, s) in row.instance_seeds.iter().enumerate() {
            ctx.seed(format!("instance/{alpha}/{theta}/{}/{i}", row.n), *s);
        }
    }
    ctx.manifest.errors.extend(r.warnings.iter().cloned());
    ctx.assert(format!("transit/{alpha}/{theta}/slope_in_bracket"), r.slope_in_bracket());
    let mut table = None;
    with_cell(r.table()?, alpha, theta, &mut table)?;
    ctx.csv(name, &table.expect("one cell"))?;
    ctx.json(
        &name.replace(".csv", "_fit.json"),
        &serde_json::json!({
            "alpha": alpha, "theta": theta, "delta": r.delta,
            "slope": r.fit.map(|f| f.slope), "slope_stderr": r.fit.map(|f| f.slope_stderr),
            "slope_ci95": r.fit.map(|f| f.slope_ci(1.96)),
            "bracket": [0.5 * r.delta, 1.5 * r.delta], "excluded_n": r.excluded,
        }),
    )
}

fn sweep(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let kind = cfg.kind.ok_or_else(|| SlabError::Domain("config.kind: required for sweep".into()))?;
    let cells = cfg.cells()?;
    let name = format!("{}.csv", kind_name(kind));
    let seed = cfg.seed();
    match kind {
        SweepKind::PhaseDiagram => {
            let alphas = match &cfg.alphas {
                Some(a) => a.clone(),
                None => vec![cfg.alpha()?],
            };
            let thetas = match &cfg.thetas {
                Some(t) => t.clone(),
                None => vec![cfg.theta()?],
            };
            let t = exp::phase_table(&exp::phase_diagram(&alphas, &thetas)?)?;
            ctx.csv(&name, &t)
        }
        SweepKind::HittingScaling | SweepKind::Retention => {
            let replicas = cfg.replicas.unwrap_or(0);
            ctx.replica_seeds(seed, replicas);
            let mut table = None;
            for (a, t) in cells {
                let hold = if kind == SweepKind::Retention { cfg.hold.unwrap_or(100.0) } else { 0.0 };
                let p = HittingParams {
                    alpha: a,
                    theta: t,
                    ns: cfg.ns()?,
                    replicas,
                    seed,
                    dt: cfg.dt,
                    hold,
                    hit_horizon: cfg.horizon,
                };
                let r = exp::hitting_and_retention(&p)?;
                for row in &r.rows {
                    ctx.seed(format!("instance/{a}/{t}/{}", row.n), row.instance_seed);
                    match kind {
                        SweepKind::HittingScaling => {
                            ctx.assert(format!("hitting/{a}/{t}/{}/within_budget", row.n), row.budget_fraction() >= 0.99)
                        }
                        _ if row.n >= 500 => {
                            ctx.assert(format!("retention/{a}/{t}/{}/escape_le_1pct", row.n), row.escape_fraction() <= 0.01)
                        }
                        _ => {}
                    }
                }
                if kind == SweepKind::HittingScaling {
                    let ok = r.fit.is_some_and(|f| f.slope > 0.0 && f.r_squared >= 0.9);
                    ctx.assert(format!("hitting/{a}/{t}/log_n_fit"), ok);
                }
                with_cell(r.table()?, a, t, &mut table)?;
            }
            ctx.csv(&name, &table.expect("at least one cell"))
        }
        SweepKind::StationaryOverlap => {
            let replicas = cfg.replicas.unwrap_or(0);
            ctx.replica_seeds(seed, replicas);
            let mut table = None;
            for (a, t) in cells {
                let p = OverlapParams {
                    alpha: a,
                    theta: t,
                    ns: cfg.ns()?,
                    replicas,
                    seed,
                    dt: cfg.dt,
                    burn_in: cfg.burn_in.unwrap_or(0.0),
                    window: cfg.window.unwrap_or(0.0),
                };
                let rows = exp::stationary_overlap(&p)?;
                for r in &rows {
                    if !r.stationary {
                        ctx.manifest.errors.push(format!("({a}, {t}) N = {}: window halves disagree; burn-in may be short", r.n));
                    }
                    ctx.assert(format!("overlap/{a}/{t}/{}/mean", r.n), (r.mean_r - r.predicted_mean).abs() <= 0.02);
                }
                with_cell(exp::overlap_table(&rows)?, a, t, &mut table)?;
            }
            ctx.csv(&name, &table.expect("at least one cell"))
        }
        SweepKind::ProjectedTv => {
            let ns = cfg.ns()?;
            let mut all = Table::default();
            for (a, t) in cells {
                for &n in &ns {
                    let part = format!("projected_tv_{a}_{t}_{n}.csv");
                    mixing(ctx, a, t, n, &part)?;
                    all.header = vec!["file".into()];
                    all.rows.push(vec![part.into()]);
                }
            }
            ctx.csv(&name, &all)
        }
        SweepKind::TransitRate => {
            for (a, t) in cells {
                transit(ctx, a, t, &format!("transit_rate_{a}_{t}.csv"))?;
            }
            Ok(())
        }
        SweepKind::EquatorHit => {
            let replicas = cfg.replicas.unwrap_or(0);
            ctx.replica_seeds(seed, replicas);
            let mut t = Table::new(&["alpha", "theta", "n", "epsilon", "probability", "hits", "replicas", "c", "bound"]);
            for (a, th) in cells {
                for n in cfg.ns()? {
                    let r = exp::equator_hit(&EquatorParams {
                        alpha: a,
                        theta: th,
                        n,
                        epsilon: cfg.epsilon.unwrap_or(0.0),
                        replicas,
                        seed,
                        dt: cfg.dt,
                    })?;
                    ctx.assert(format!("equator/{a}/{th}/{n}/above_bound"), r.consistent_with_bound());
                    t.push(vec![
                        a.into(),
                        th.into(),
                        n.into(),
                        r.epsilon.into(),
                        r.probability.into(),
                        r.hits.into(),
                        r.replicas.into(),
                        r.c_const.into(),
                        r.bound.into(),
                    ])?;
                }
            }
            ctx.csv(&name, &t)
        }
    }
}
