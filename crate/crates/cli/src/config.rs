//! JSON run configuration: parsing, defaults and validation.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use slab_core::experiments::{InitKind, MIN_REPLICAS};
use slab_core::thresholds::theta_0l;
use slab_core::{PhasePoint, SlabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Generate,
    Thresholds,
    FreeEnergy,
    Simulate,
    Mixing,
    Transit,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Generate => "generate",
            Self::Thresholds => "thresholds",
            Self::FreeEnergy => "free-energy",
            Self::Simulate => "simulate",
            Self::Mixing => "mixing",
            Self::Transit => "transit",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    HittingScaling,
    Retention,
    StationaryOverlap,
    ProjectedTv,
    TransitRate,
    PhaseDiagram,
    EquatorHit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eigenvalues {
    /// `θ + 1/θ, 2, −2`.
    Limiting,
    /// From a sampled instance of size `n`.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    Uniform,
    Equator,
    Top,
    MinusTop,
    UniformHalf,
    PlusCap,
}

/// Everything any command may read. Fields irrelevant to the chosen command
/// are accepted but ignored; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Eigenvalues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contour: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<SweepKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inits: Option<Vec<InitKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing_replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing_horizon: Option<f64>,

    /// Evaluate the command's acceptance assertions; failures exit with 3.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assertions: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

fn err(path: &str, msg: impl std::fmt::Display) -> SlabError {
    SlabError::Domain(format!("config.{path}: {msg}"))
}

/// Parses a JSON document, rejecting an explicit inverse temperature and any
/// unknown key.
pub fn parse_config(text: &str) -> Result<RunConfig, SlabError> {
    let v: Value = serde_json::from_str(text).map_err(|e| SlabError::Format(format!("malformed config JSON: {e}")))?;
    if let Some(obj) = v.as_object() {
        if obj.contains_key("beta") {
            return Err(err("beta", "beta is derived as alpha/theta and must not be supplied"));
        }
    } else {
        return Err(SlabError::Format("config must be a JSON object".into()));
    }
    serde_json::from_value(v).map_err(|e| SlabError::Format(format!("config: {e}")))
}

impl RunConfig {
    fn need<T: Copy>(v: Option<T>, path: &str) -> Result<T, SlabError> {
        v.ok_or_else(|| err(path, "required for this command"))
    }

    pub fn alpha(&self) -> Result<f64, SlabError> {
        Self::need(self.alpha, "alpha")
    }

    pub fn theta(&self) -> Result<f64, SlabError> {
        Self::need(self.theta, "theta")
    }

    pub fn n(&self) -> Result<usize, SlabError> {
        Self::need(self.n, "n")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn phase(&self, n: usize) -> Result<PhasePoint, SlabError> {
        PhasePoint::new(self.alpha()?, self.theta()?, n)
    }

    pub fn cells(&self) -> Result<Vec<(f64, f64)>, SlabError> {
        let alphas = match &self.alphas {
            Some(a) => a.clone(),
            None => vec![self.alpha()?],
        };
        let thetas = match &self.thetas {
            Some(t) => t.clone(),
            None => vec![self.theta()?],
        };
        if alphas.is_empty() || thetas.is_empty() {
            return Err(err("alphas", "grid must be non-empty"));
        }
        Ok(alphas.iter().flat_map(|&a| thetas.iter().map(move |&t| (a, t))).collect())
    }

    pub fn ns(&self) -> Result<Vec<usize>, SlabError> {
        match &self.ns {
            Some(ns) if !ns.is_empty() => Ok(ns.clone()),
            Some(_) => Err(err("ns", "must be non-empty")),
            None => Ok(vec![self.n()?]),
        }
    }

    fn check_replicas(&self, path: &str, r: Option<usize>) -> Result<(), SlabError> {
        let r = Self::need(r, path)?;
        if r < MIN_REPLICAS {
            return Err(err(path, format!("must be >= {MIN_REPLICAS} for statistical output, got {r}")));
        }
        Ok(())
    }

    fn check_positive(&self, path: &str, v: Option<f64>) -> Result<(), SlabError> {
        if let Some(x) = v {
            if !(x > 0.0 && x.is_finite()) {
                return Err(err(path, format!("must be > 0, got {x}")));
            }
        }
        Ok(())
    }

    /// Checks everything the command needs before any computation starts.
    pub fn validate(&self, command: Command) -> Result<(), SlabError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(err("command", format!("file says {} but {} was invoked", c.name(), command.name())));
            }
        }
        if self.workers == Some(0) {
            return Err(err("workers", "must be >= 1"));
        }
        for (p, v) in [
            ("dt", self.dt),
            ("t_max", self.t_max),
            ("horizon", self.horizon),
            ("max_time", self.max_time),
            ("burn_factor", self.burn_factor),
            ("mixing_horizon", self.mixing_horizon),
            ("window", self.window),
        ] {
            self.check_positive(p, v)?;
        }
        if self.record_stride == Some(0) {
            return Err(err("record_stride", "must be >= 1"));
        }
        match command {
            Command::Generate => {
                self.phase(self.n()?)?;
            }
            Command::Thresholds => {
                let theta = self.theta()?;
                match self.eigenvalues.unwrap_or(Eigenvalues::Limiting) {
                    Eigenvalues::Limiting if theta <= 1.0 => {
                        return Err(err("theta", "limiting eigenvalues need theta > 1; use \"eigenvalues\": \"sampled\""));
                    }
                    Eigenvalues::Sampled => {
                        self.n()?;
                    }
                    _ => {}
                }
                self.phase(self.n.unwrap_or(1000))?;
            }
            Command::FreeEnergy => {
                let phase = self.phase(self.n.unwrap_or(1000))?;
                if phase.theta() <= 1.0 {
                    return Err(err("theta", "the spiked free energy needs theta > 1"));
                }
                if self.contour.unwrap_or(false) || self.mc_samples.is_some() {
                    self.n()?;
                }
            }
            Command::Simulate => {
                self.phase(self.n()?)?;
                Self::need(self.t_max, "t_max")?;
                if self.init == Some(InitName::PlusCap) {
                    let e = Self::need(self.epsilon, "epsilon")?;
                    if !(e.abs() <= 1.0) {
                        return Err(err("epsilon", "must lie in [-1, 1]"));
                    }
                }
            }
            Command::Mixing => {
                self.phase(self.n()?)?;
                self.check_replicas("replicas", self.replicas)?;
                Self::need(self.horizon, "horizon")?;
            }
            Command::Transit => self.validate_transit()?,
            Command::Sweep => self.validate_sweep()?,
        }
        Ok(())
    }

    fn validate_transit(&self) -> Result<(), SlabError> {
        let alpha = self.alpha()?;
        if !(alpha > 1.0) {
            return Err(SlabError::Domain("transit requires alpha > 1".into()));
        }
        for n in self.ns()? {
            self.phase(n)?;
        }
        self.check_replicas("transits", self.transits)?;
        self.check_replicas("mixing_replicas", self.mixing_replicas.or(Some(MIN_REPLICAS)))?;
        Self::need(self.max_time, "max_time")?;
        Ok(())
    }

    fn validate_sweep(&self) -> Result<(), SlabError> {
        let kind = Self::need(self.kind, "kind")?;
        let cells = self.cells()?;
        if kind == SweepKind::PhaseDiagram {
            for (a, t) in cells {
                PhasePoint::new(a, t, 4)?;
            }
            return Ok(());
        }
        let ns = self.ns()?;
        for &(a, t) in &cells {
            for &n in &ns {
                PhasePoint::new(a, t, n)?;
            }
        }
        match kind {
            SweepKind::HittingScaling | SweepKind::Retention => {
                self.check_replicas("replicas", self.replicas)?;
                for &(a, t) in &cells {
                    if !(a > 1.0) {
                        return Err(err("alpha", format!("{} needs alpha > 1, got {a}", kind_name(kind))));
                    }
                    let t0 = theta_0l(a)?;
                    if !(t > t0) {
                        return Err(err("theta", format!("needs theta > theta_0L({a}) = {t0:.4}, got {t}")));
                    }
                }
            }
            SweepKind::StationaryOverlap => {
                self.check_replicas("replicas", self.replicas)?;
                Self::need(self.burn_in, "burn_in")?;
                Self::need(self.window, "window")?;
                for &(a, t) in &cells {
                    // beta*theta is alpha itself.
                    if !(a > 1.0) {
                        return Err(err("alpha", format!("needs beta*theta = alpha > 1, got {a}")));
                    }
                    if !(t > 1.0) {
                        return Err(err("theta", format!("needs a spike outlier (theta > 1), got {t}")));
                    }
                }
            }
            SweepKind::ProjectedTv => {
                self.check_replicas("replicas", self.replicas)?;
                Self::need(self.horizon, "horizon")?;
            }
            SweepKind::TransitRate => {
                for &(a, _) in &cells {
                    if !(a > 1.0) {
                        return Err(SlabError::Domain("transit requires alpha > 1".into()));
                    }
                }
                self.check_replicas("transits", self.transits)?;
                Self::need(self.max_time, "max_time")?;
            }
            SweepKind::EquatorHit => {
                self.check_replicas("replicas", self.replicas)?;
                let e = Self::need(self.epsilon, "epsilon")?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(err("epsilon", "must lie in (0, 1)"));
                }
            }
            SweepKind::PhaseDiagram => unreachable!(),
        }
        Ok(())
    }
}

pub fn kind_name(k: SweepKind) -> &'static str {
    match k {
        SweepKind::HittingScaling => "hitting_scaling",
        SweepKind::Retention => "retention",
        SweepKind::StationaryOverlap => "stationary_overlap",
        SweepKind::ProjectedTv => "projected_tv",
        SweepKind::TransitRate => "transit_rate",
        SweepKind::PhaseDiagram => "phase_diagram",
        SweepKind::EquatorHit => "equator_hit",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_thresholds_config() {
        let c = parse_config(r#"{"command":"thresholds","alpha":8,"theta":4}"#).unwrap();
        c.validate(Command::Thresholds).unwrap();
        assert_eq!(c.eigenvalues, None);
    }

    #[test]
    fn beta_is_rejected_with_its_path() {
        let e = parse_config(r#"{"command":"simulate","beta":2,"alpha":8,"theta":4}"#).unwrap_err();
        assert!(e.to_string().contains("config.beta"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_config(r#"{"alpha":8,"theta":4,"colour":1}"#).unwrap_err();
        assert!(e.to_string().contains("colour"));
    }

    #[test]
    fn transit_needs_low_temperature() {
        let c = parse_config(r#"{"alpha":0.9,"theta":4,"ns":[8],"transits":40,"max_time":10}"#).unwrap();
        let e = c.validate(Command::Transit).unwrap_err();
        assert_eq!(e.to_string(), "domain error: transit requires alpha > 1");
    }

    #[test]
    fn stationary_overlap_cells_follow_beta_theta() {
        let ok = r#"{"kind":"stationary_overlap","alpha":2,"theta":3,"ns":[50],"replicas":30,"burn_in":1,"window":1}"#;
        parse_config(ok).unwrap().validate(Command::Sweep).unwrap();
        let hot = r#"{"kind":"stationary_overlap","alpha":0.8,"theta":3,"ns":[50],"replicas":30,"burn_in":1,"window":1}"#;
        let e = parse_config(hot).unwrap().validate(Command::Sweep).unwrap_err();
        assert!(e.to_string().contains("config.alpha"), "{e}");
    }

    #[test]
    fn too_few_replicas_named() {
        let c = parse_config(r#"{"alpha":8,"theta":4,"n":50,"replicas":5,"horizon":1}"#).unwrap();
        assert!(c.validate(Command::Mixing).unwrap_err().to_string().contains("config.replicas"));
    }
}
