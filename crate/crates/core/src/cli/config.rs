//! Experiment configuration.
//!
//! A config file is either flat `key = value` text (`#` starts a comment,
//! lists are comma separated with optional brackets) or a single JSON object
//! with the same keys. Command-line flags are applied afterwards and win.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::engine::{BanditInstance, RunConfig, DEFAULT_MAX_STEPS, DEFAULT_TRACE_STRIDE};
use crate::error::ChmError;
use crate::exp_family::ExpFamilyModel;
use crate::oracle::{characteristic_time, lower_bound, Query};
use crate::policy::{PolicyKind, DEFAULT_EPSILON_KL, DEFAULT_REJECTION_CAP};
use crate::stopping::StopConfig;

/// Means of the seven-arm Bernoulli benchmark instance.
pub const BENCHMARK_MEANS: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

pub const KEYS: [&str; 21] = [
    "family",
    "variance",
    "prior_alpha",
    "prior_beta",
    "prior_mean",
    "prior_variance",
    "means",
    "gamma",
    "gamma_minus",
    "gamma_plus",
    "delta",
    "policy",
    "reps",
    "seed",
    "max_steps",
    "init_rounds",
    "trace_stride",
    "rejection_cap",
    "r0_floor",
    "epsilon_kl",
    "out",
];

/// Where a setting came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Default,
    File { path: PathBuf, line: usize },
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::File { path, line } => write!(f, "{}:{}", path.display(), line),
            Origin::Flag(flag) => write!(f, "{flag}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Option<Origin>,
    pub message: String,
}

impl ConfigError {
    fn at(origin: &Origin, message: impl Into<String>) -> Self {
        Self {
            origin: Some(origin.clone()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Some(o) => write!(f, "{o}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// One `key = value` setting before interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

impl Entry {
    pub fn flag(flag: &str, key: &str, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
            origin: Origin::Flag(flag.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Bernoulli,
    Gaussian,
}

impl FamilyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: FamilyKind,
    /// Observation variance of Gaussian rewards.
    pub variance: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub means: Vec<f64>,
    /// Point queries; empty when an interval is configured.
    pub gammas: Vec<f64>,
    pub gamma_minus: Option<f64>,
    pub gamma_plus: Option<f64>,
    pub deltas: Vec<f64>,
    pub policy: PolicyKind,
    pub reps: usize,
    pub seed: u64,
    pub max_steps: u64,
    pub init_rounds: u64,
    pub trace_stride: u64,
    pub rejection_cap: u64,
    pub r0_floor: u64,
    pub epsilon_kl: f64,
    pub out: PathBuf,
    origins: BTreeMap<&'static str, Origin>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Bernoulli,
            variance: 1.0,
            prior_alpha: 1.0,
            prior_beta: 1.0,
            prior_mean: 0.0,
            prior_variance: 1.0,
            means: BENCHMARK_MEANS.to_vec(),
            gammas: Vec::new(),
            gamma_minus: None,
            gamma_plus: None,
            deltas: vec![0.1],
            policy: PolicyKind::ThompsonChm,
            reps: 100,
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            init_rounds: 0,
            trace_stride: DEFAULT_TRACE_STRIDE,
            rejection_cap: DEFAULT_REJECTION_CAP,
            r0_floor: 1,
            epsilon_kl: DEFAULT_EPSILON_KL,
            out: PathBuf::from("."),
            origins: BTreeMap::new(),
        }
    }
}

/// Parses config text; `path` only labels error locations.
pub fn parse_text(path: &Path, text: &str) -> Result<Vec<Entry>, ConfigError> {
    if text.trim_start().starts_with('{') {
        parse_json(path, text)
    } else {
        parse_key_values(path, text)
    }
}

fn parse_key_values(path: &Path, text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::File {
            path: path.to_path_buf(),
            line: i + 1,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(&origin, format!("expected 'key = value', found '{line}'")))?;
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(ConfigError::at(&origin, "missing key before '='"));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(ConfigError::at(&origin, format!("duplicate key '{key}' (first set at {})", prev.origin)));
        }
        entries.push(Entry {
            key,
            value: value.trim().to_string(),
            origin,
        });
    }
    Ok(entries)
}

fn parse_json(path: &Path, text: &str) -> Result<Vec<Entry>, ConfigError> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(|e| {
        ConfigError::at(
            &Origin::File {
                path: path.to_path_buf(),
                line: e.line(),
            },
            format!("invalid JSON: {e}"),
        )
    })?;
    let mut entries = Vec::with_capacity(map.len());
    for (key, value) in map {
        let origin = Origin::File {
            path: path.to_path_buf(),
            line: json_key_line(text, &key),
        };
        let value = json_scalar_text(&value)
            .or_else(|| match &value {
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(json_scalar_text)
                    .collect::<Option<Vec<_>>>()
                    .map(|v| v.join(",")),
                _ => None,
            })
            .ok_or_else(|| ConfigError::at(&origin, format!("'{key}' must be a scalar or a flat list")))?;
        entries.push(Entry {
            key: normalize_key(&key),
            value,
            origin,
        });
    }
    Ok(entries)
}

fn json_scalar_text(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn json_key_line(text: &str, key: &str) -> usize {
    let quoted = format!("\"{key}\"");
    text.find(&quoted)
        .map(|at| text[..at].matches('\n').count() + 1)
        .unwrap_or(1)
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

fn parse_real(s: &str) -> Result<f64, String> {
    let t = s.trim().trim_matches('"');
    let v = match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => f64::INFINITY,
        "-inf" | "-infinity" => f64::NEG_INFINITY,
        _ => t.parse::<f64>().map_err(|_| format!("'{t}' is not a number"))?,
    };
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let t = s.trim();
    let t = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')).unwrap_or(t);
    t.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse_real)
        .collect()
}

fn parse_count(s: &str) -> Result<u64, String> {
    let t = s.trim();
    if let Ok(n) = t.parse::<u64>() {
        return Ok(n);
    }
    // accept integral reals such as 1e7
    match t.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("'{t}' is not a nonnegative integer")),
    }
}

impl ExperimentConfig {
    /// Applies entries in order on top of the defaults.
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a Entry>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for e in entries {
            cfg.apply(e)?;
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, e: &Entry) -> Result<(), ConfigError> {
        let key = KEYS
            .iter()
            .copied()
            .find(|k| *k == e.key)
            .ok_or_else(|| ConfigError::at(&e.origin, format!("unknown key '{}'", e.key)))?;
        self.set(key, &e.value).map_err(|m| ConfigError::at(&e.origin, format!("{key}: {m}")))?;
        self.origins.insert(key, e.origin.clone());
        Ok(())
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let v = v.trim();
        match key {
            "family" => {
                self.family = match v.trim_matches('"').to_ascii_lowercase().as_str() {
                    "bernoulli" => FamilyKind::Bernoulli,
                    "gaussian" => FamilyKind::Gaussian,
                    other => return Err(format!("unknown family '{other}' (expected bernoulli or gaussian)")),
                }
            }
            "variance" => self.variance = parse_real(v)?,
            "prior_alpha" => self.prior_alpha = parse_real(v)?,
            "prior_beta" => self.prior_beta = parse_real(v)?,
            "prior_mean" => self.prior_mean = parse_real(v)?,
            "prior_variance" => self.prior_variance = parse_real(v)?,
            "means" => self.means = parse_list(v)?,
            "gamma" => {
                self.gammas = parse_list(v)?;
                if self.gammas.is_empty() {
                    return Err("empty list".into());
                }
            }
            "gamma_minus" => self.gamma_minus = Some(parse_real(v)?),
            "gamma_plus" => self.gamma_plus = Some(parse_real(v)?),
            "delta" => {
                self.deltas = parse_list(v)?;
                if self.deltas.is_empty() {
                    return Err("empty list".into());
                }
            }
            "policy" => self.policy = v.trim_matches('"').parse().map_err(|e: ChmError| e.to_string())?,
            "reps" => self.reps = parse_count(v)? as usize,
            "seed" => self.seed = parse_count(v)?,
            "max_steps" => self.max_steps = parse_count(v)?,
            "init_rounds" => self.init_rounds = parse_count(v)?,
            "trace_stride" => self.trace_stride = parse_count(v)?,
            "rejection_cap" => self.rejection_cap = parse_count(v)?,
            "r0_floor" => self.r0_floor = parse_count(v)?,
            "epsilon_kl" => self.epsilon_kl = parse_real(v)?,
            "out" => {
                let p = v.trim_matches('"');
                if p.is_empty() {
                    return Err("empty path".into());
                }
                self.out = PathBuf::from(p);
            }
            _ => unreachable!("key list and setter agree"),
        }
        Ok(())
    }

    /// Whether `key` was given by a file or a flag.
    pub fn is_set(&self, key: &str) -> bool {
        self.origins.contains_key(key)
    }

    fn origin(&self, key: &str) -> Origin {
        self.origins.get(key).cloned().unwrap_or(Origin::Default)
    }

    fn fail(&self, keys: &[&str], err: impl fmt::Display) -> ConfigError {
        // blame the most specific key that was set explicitly
        let origin = keys
            .iter()
            .map(|k| self.origin(k))
            .find(|o| *o != Origin::Default)
            .unwrap_or(Origin::Default);
        ConfigError::at(&origin, err.to_string())
    }

    pub fn model(&self) -> Result<ExpFamilyModel, ConfigError> {
        match self.family {
            FamilyKind::Bernoulli => ExpFamilyModel::bernoulli_with_prior(self.prior_alpha, self.prior_beta)
                .map_err(|e| self.fail(&["prior_alpha", "prior_beta", "family"], e)),
            FamilyKind::Gaussian => ExpFamilyModel::gaussian_with_prior(self.variance, self.prior_mean, self.prior_variance)
                .map_err(|e| self.fail(&["variance", "prior_mean", "prior_variance", "family"], e)),
        }
    }

    /// The configured queries: one per point in `gamma`, or the interval.
    pub fn queries(&self) -> Result<Vec<Query>, ConfigError> {
        let interval = self.gamma_minus.is_some() || self.gamma_plus.is_some();
        if interval && !self.gammas.is_empty() {
            return Err(self.fail(&["gamma", "gamma_minus", "gamma_plus"], "set either gamma or gamma_minus/gamma_plus, not both"));
        }
        if interval {
            let lo = self.gamma_minus.unwrap_or(f64::NEG_INFINITY);
            let hi = self.gamma_plus.unwrap_or(f64::INFINITY);
            return Ok(vec![Query::interval(lo, hi).map_err(|e| self.fail(&["gamma_minus", "gamma_plus"], e))?]);
        }
        if self.gammas.is_empty() {
            return Err(self.fail(&["gamma"], "no query configured (set gamma, or gamma_minus/gamma_plus)"));
        }
        self.gammas
            .iter()
            .map(|&g| Query::point(g).map_err(|e| self.fail(&["gamma"], e)))
            .collect()
    }

    pub fn run_config(&self, delta: f64) -> Result<RunConfig, ConfigError> {
        let mut rc = RunConfig::new(self.policy, delta).map_err(|e| self.fail(&["delta"], e))?;
        rc.stop = StopConfig::new(delta)
            .and_then(|s| s.with_r0_floor(self.r0_floor))
            .map_err(|e| self.fail(&["r0_floor", "delta"], e))?;
        rc.max_steps = self.max_steps;
        rc.init_rounds = self.init_rounds;
        rc.trace_stride = self.trace_stride;
        rc.policy.rejection_cap = self.rejection_cap;
        rc.policy.epsilon_kl = self.epsilon_kl;
        rc.validate()
            .map_err(|e| self.fail(&["rejection_cap", "epsilon_kl", "max_steps", "policy"], e))?;
        Ok(rc)
    }

    pub fn instance(&self, q: Query) -> Result<BanditInstance, ConfigError> {
        BanditInstance::new(self.model()?, self.means.clone(), q).map_err(|e| self.fail(&["gamma", "gamma_minus", "gamma_plus", "means"], e))
    }

    /// Checks everything every subcommand relies on, before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let model = self.model()?;
        if self.means.is_empty() {
            return Err(self.fail(&["means"], "at least one arm mean is required"));
        }
        for &mu in &self.means {
            model.check_mean(mu).map_err(|e| self.fail(&["means", "family"], e))?;
        }
        if self.reps == 0 {
            return Err(self.fail(&["reps"], "reps must be at least 1"));
        }
        if self.deltas.is_empty() {
            return Err(self.fail(&["delta"], "at least one delta is required"));
        }
        for &d in &self.deltas {
            self.run_config(d)?;
            lower_bound(1.0, d).map_err(|e| self.fail(&["delta"], e))?;
        }
        for q in self.queries()? {
            self.instance(q)?;
            characteristic_time(&model, &self.means, &q).map_err(|e| self.fail(&["gamma", "gamma_minus", "gamma_plus", "means"], e))?;
        }
        if self.policy == PolicyKind::TwoPass && self.gammas.is_empty() {
            return Err(self.fail(&["policy"], "two-pass takes point queries only"));
        }
        Ok(())
    }

    /// Canonical text of everything that determines a summary row.
    pub fn canonical(&self, q: &Query, delta: f64) -> String {
        use super::output::fmt_float as f;
        let prior = match self.family {
            FamilyKind::Bernoulli => format!("beta({},{})", f(self.prior_alpha), f(self.prior_beta)),
            FamilyKind::Gaussian => format!(
                "variance={};normal({},{})",
                f(self.variance),
                f(self.prior_mean),
                f(self.prior_variance)
            ),
        };
        let means: Vec<String> = self.means.iter().map(|&m| f(m)).collect();
        format!(
            "family={};prior={};means=[{}];lower={};upper={};delta={};policy={};reps={};seed={};max_steps={};init_rounds={};rejection_cap={};r0_floor={};epsilon_kl={}",
            self.family.as_str(),
            prior,
            means.join(","),
            f(q.lower()),
            f(q.upper()),
            f(delta),
            self.policy,
            self.reps,
            self.seed,
            self.max_steps,
            self.init_rounds,
            self.rejection_cap,
            self.r0_floor,
            f(self.epsilon_kl),
        )
    }
}
