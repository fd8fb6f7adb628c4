//! Flat `key = value` experiment configuration with `#` comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::model::{GbmSpec, TimeGrid};

/// Error tied to a line of the configuration text (0 when the offending
/// value came from a default or the command line).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn cfg_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

/// Source of the survival function `F` used after the observation date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalSource {
    /// Closed-form first-passage survival of the geometric signal.
    Analytic,
    /// Quantized survival tables of the tree.
    Quantized,
}

impl FromStr for SurvivalSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "quantized" => Ok(Self::Quantized),
            _ => Err(format!("expected analytic or quantized, got {s:?}")),
        }
    }
}

impl SurvivalSource {
    fn name(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::Quantized => "quantized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
    pub x0: f64,
    pub y0: f64,
    pub barrier: f64,
    /// Observation date `t_m`.
    pub t_obs: f64,
    /// Euler steps on `[0, t_m]`; the same step length is kept afterwards.
    pub obs_steps: usize,
    /// Last horizon `t_n`.
    pub t_end: f64,
    /// First horizon reported.
    pub horizon_start: f64,
    /// Grid sizes; the first one is used by single-tree commands.
    pub sizes: Vec<usize>,
    /// Starting point of the survival comparison (nearest grid point is used).
    pub fbar_x: f64,
    pub seed: u64,
    /// Observation paths (option pricing), particles (diagnostics).
    pub paths: usize,
    pub obs_path: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub ta: f64,
    pub tb: f64,
    pub lgd: f64,
    pub rate: f64,
    pub alpha: f64,
    pub spread_bps: f64,
    pub strikes: Vec<f64>,
    pub deltas: Vec<f64>,
    pub lgd_list: Vec<f64>,
    pub rate_list: Vec<f64>,
    pub survival: SurvivalSource,
    explicit: BTreeSet<String>,
    lines: BTreeMap<String, usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mu: 0.03,
            sigma: 0.09,
            delta: 0.5,
            x0: 86.3,
            y0: 86.3,
            barrier: 76.0,
            t_obs: 1.0,
            obs_steps: 50,
            t_end: 3.0,
            horizon_start: 1.1,
            sizes: vec![30],
            fbar_x: 86.3,
            seed: 0,
            paths: 150_000,
            obs_path: None,
            out: None,
            ta: 1.0,
            tb: 3.0,
            lgd: 0.6,
            rate: 0.0,
            alpha: 0.25,
            spread_bps: 0.0,
            strikes: vec![0.8, 1.0, 1.2],
            deltas: vec![0.01, 0.02, 0.03],
            lgd_list: vec![0.4, 0.5, 0.6, 0.7],
            rate_list: vec![0.0, 0.01, 0.02, 0.03],
            survival: SurvivalSource::Analytic,
            explicit: BTreeSet::new(),
            lines: BTreeMap::new(),
        }
    }
}

fn parse_one<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| cfg_err(line, format!("bad value {v:?} for {key}: {e}")))
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let out = v
        .split(',')
        .map(|t| parse_one(line, key, t.trim()))
        .collect::<Result<Vec<T>, _>>()?;
    if out.is_empty() {
        return Err(cfg_err(line, format!("{key} needs at least one value")));
    }
    Ok(out)
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "mu",
        "sigma",
        "delta",
        "x0",
        "y0",
        "barrier",
        "t_obs",
        "obs_steps",
        "t_end",
        "horizon_start",
        "sizes",
        "fbar_x",
        "seed",
        "paths",
        "obs_path",
        "out",
        "ta",
        "tb",
        "lgd",
        "rate",
        "alpha",
        "spread_bps",
        "strikes",
        "deltas",
        "lgd_list",
        "rate_list",
        "survival",
    ];

    /// Parse configuration text; every key is optional.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected key = value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(cfg_err(line, format!("empty value for {key}")));
            }
            if let Some(prev) = cfg.lines.get(key) {
                return Err(cfg_err(line, format!("{key} already set on line {prev}")));
            }
            cfg.set(line, key, value)?;
            cfg.lines.insert(key.to_string(), line);
            cfg.explicit.insert(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "mu" => self.mu = parse_one(line, key, v)?,
            "sigma" => self.sigma = parse_one(line, key, v)?,
            "delta" => self.delta = parse_one(line, key, v)?,
            "x0" => self.x0 = parse_one(line, key, v)?,
            "y0" => self.y0 = parse_one(line, key, v)?,
            "barrier" => self.barrier = parse_one(line, key, v)?,
            "t_obs" => self.t_obs = parse_one(line, key, v)?,
            "obs_steps" => self.obs_steps = parse_one(line, key, v)?,
            "t_end" => self.t_end = parse_one(line, key, v)?,
            "horizon_start" => self.horizon_start = parse_one(line, key, v)?,
            "sizes" => self.sizes = parse_list(line, key, v)?,
            "fbar_x" => self.fbar_x = parse_one(line, key, v)?,
            "seed" => self.seed = parse_one(line, key, v)?,
            "paths" => self.paths = parse_one(line, key, v)?,
            "obs_path" => self.obs_path = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "ta" => self.ta = parse_one(line, key, v)?,
            "tb" => self.tb = parse_one(line, key, v)?,
            "lgd" => self.lgd = parse_one(line, key, v)?,
            "rate" => self.rate = parse_one(line, key, v)?,
            "alpha" => self.alpha = parse_one(line, key, v)?,
            "spread_bps" => self.spread_bps = parse_one(line, key, v)?,
            "strikes" => self.strikes = parse_list(line, key, v)?,
            "deltas" => self.deltas = parse_list(line, key, v)?,
            "lgd_list" => self.lgd_list = parse_list(line, key, v)?,
            "rate_list" => self.rate_list = parse_list(line, key, v)?,
            "survival" => self.survival = parse_one(line, key, v)?,
            _ => return Err(cfg_err(line, format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Line on which `key` was set, 0 if it was not.
    pub fn line_of(&self, key: &str) -> usize {
        self.lines.get(key).copied().unwrap_or(0)
    }

    /// Whether `key` was given explicitly rather than defaulted.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Command-specific defaults that apply unless the configuration set
    /// the key.
    pub fn default_sigma(&mut self, value: f64) {
        if !self.is_explicit("sigma") {
            self.sigma = value;
        }
    }

    pub fn default_t_end(&mut self, value: f64) {
        if !self.is_explicit("t_end") {
            self.t_end = value;
        }
    }

    pub fn default_survival(&mut self, value: SurvivalSource) {
        if !self.is_explicit("survival") {
            self.survival = value;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| Err(cfg_err(self.line_of(key), msg));
        let positive = [
            ("sigma", self.sigma),
            ("x0", self.x0),
            ("y0", self.y0),
            ("t_obs", self.t_obs),
            ("alpha", self.alpha),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("{key} must be positive and finite, got {v}"));
            }
        }
        for (key, v) in [("mu", self.mu), ("rate", self.rate), ("barrier", self.barrier)] {
            if !v.is_finite() {
                return bad(key, format!("{key} must be finite"));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta", format!("delta must be non-negative, got {}", self.delta));
        }
        if !(self.barrier >= 0.0 && self.barrier < self.x0) {
            return bad("barrier", format!("barrier {} must lie in [0, x0)", self.barrier));
        }
        if self.obs_steps == 0 {
            return bad("obs_steps", "obs_steps must be at least 1".into());
        }
        if !(self.t_end >= self.t_obs) {
            return bad("t_end", format!("t_end {} before t_obs {}", self.t_end, self.t_obs));
        }
        if !(self.horizon_start >= self.t_obs && self.horizon_start <= self.t_end) {
            return bad("horizon_start", format!("horizon_start must lie in [{}, {}]", self.t_obs, self.t_end));
        }
        if self.sizes.contains(&0) {
            return bad("sizes", "grid sizes must be positive".into());
        }
        if self.paths < 2 {
            return bad("paths", "paths must be at least 2".into());
        }
        if !(self.ta >= 0.0 && self.tb > self.ta) {
            return bad("tb", format!("need 0 <= ta < tb, got ta={} tb={}", self.ta, self.tb));
        }
        if !(self.lgd > 0.0 && self.lgd <= 1.0) {
            return bad("lgd", format!("lgd must lie in (0, 1], got {}", self.lgd));
        }
        if self.strikes.iter().any(|&k| !(k > 0.0)) {
            return bad("strikes", "relative strikes must be positive".into());
        }
        if self.deltas.iter().any(|&d| !(d >= 0.0)) {
            return bad("deltas", "deltas must be non-negative".into());
        }
        if self.lgd_list.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            return bad("lgd_list", "every lgd must lie in (0, 1]".into());
        }
        if !(self.spread_bps >= 0.0) {
            return bad("spread_bps", "spread_bps must be non-negative".into());
        }
        GbmSpec::new(self.mu, self.sigma, self.delta, self.x0, self.y0, self.barrier)
            .map_err(|e| cfg_err(self.line_of("sigma"), e.to_string()))?;
        Ok(())
    }

    pub fn spec(&self) -> GbmSpec {
        GbmSpec::new(self.mu, self.sigma, self.delta, self.x0, self.y0, self.barrier)
            .expect("validated configuration")
    }

    /// `obs_steps` steps to `t_obs`, extended with the same step to `t_end`.
    pub fn time_grid(&self) -> Result<TimeGrid, ConfigError> {
        TimeGrid::observed_then_extended(self.t_obs, self.obs_steps, self.t_end)
            .map_err(|e| cfg_err(self.line_of("obs_steps"), e.to_string()))
    }

    /// Every resolved value that affects results, one `key=value` per line
    /// in a fixed order. The output path is left out.
    pub fn canonical(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values: Vec<String> = vec![
            self.mu.to_string(),
            self.sigma.to_string(),
            self.delta.to_string(),
            self.x0.to_string(),
            self.y0.to_string(),
            self.barrier.to_string(),
            self.t_obs.to_string(),
            self.obs_steps.to_string(),
            self.t_end.to_string(),
            self.horizon_start.to_string(),
            join(&self.sizes),
            self.fbar_x.to_string(),
            self.seed.to_string(),
            self.paths.to_string(),
            path(&self.obs_path),
            path(&self.out),
            self.ta.to_string(),
            self.tb.to_string(),
            self.lgd.to_string(),
            self.rate.to_string(),
            self.alpha.to_string(),
            self.spread_bps.to_string(),
            join(&self.strikes),
            join(&self.deltas),
            join(&self.lgd_list),
            join(&self.rate_list),
            self.survival.name().to_string(),
        ];
        let mut s = String::new();
        for (k, v) in Self::KEYS.iter().zip(values).filter(|(k, _)| **k != "out") {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
