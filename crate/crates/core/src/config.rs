//! Run configuration: a flat `key=value` file, flag overrides, and a
//! stable digest that every report embeds so runs can be compared.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::barrier::BarrierMode;
use crate::dynamics::DynamicsParams;
use crate::embed::{fnv1a64, EmbedderConfig};
use crate::error::{Error, Result};
use crate::eval::RelevanceStrategy;
use crate::retrieval::RetrievalParams;

/// Every tunable of the engine. Field semantics live with the modules
/// that consume them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub alpha_momentum: f64,
    pub lambda_decay: f64,
    pub tau_surprise: f64,
    pub beta_hierarchy: f64,
    pub w_user: f64,
    pub w_topic: f64,
    pub w_time: f64,
    pub time_horizon: u64,
    pub top_k: usize,
    pub barrier_mode: BarrierMode,
    pub seed: u64,
    pub strategy: RelevanceStrategy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            alpha_momentum: 0.3,
            lambda_decay: 0.01,
            tau_surprise: 0.5,
            beta_hierarchy: 0.5,
            w_user: 1.0,
            w_topic: 0.5,
            w_time: 0.25,
            time_horizon: 1000,
            top_k: 5,
            barrier_mode: BarrierMode::Gated,
            seed: 0,
            strategy: RelevanceStrategy::Strict,
        }
    }
}

/// Keys accepted in config files and `--set` overrides, in canonical order.
pub const CONFIG_KEYS: [&str; 13] = [
    "alpha_momentum",
    "barrier_mode",
    "beta_hierarchy",
    "dim",
    "lambda_decay",
    "seed",
    "strategy",
    "tau_surprise",
    "time_horizon",
    "top_k",
    "w_time",
    "w_topic",
    "w_user",
];

impl RunConfig {
    /// Defaults overlaid with an optional config file.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = path {
            config.apply_file(&fs::read_to_string(path)?)?;
        }
        Ok(config)
    }

    pub fn apply_file(&mut self, content: &str) -> Result<()> {
        for (idx, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Invalid {
                what: "config line",
                why: format!("line {}: expected key=value, got {line:?}", idx + 1),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    /// Set one key from its string form. Unknown keys and out-of-range
    /// values are named in the error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.dim = parse_num(key, value)?,
            "alpha_momentum" => self.alpha_momentum = parse_num(key, value)?,
            "lambda_decay" => self.lambda_decay = parse_num(key, value)?,
            "tau_surprise" => self.tau_surprise = parse_num(key, value)?,
            "beta_hierarchy" => self.beta_hierarchy = parse_num(key, value)?,
            "w_user" => self.w_user = parse_num(key, value)?,
            "w_topic" => self.w_topic = parse_num(key, value)?,
            "w_time" => self.w_time = parse_num(key, value)?,
            "time_horizon" => self.time_horizon = parse_num(key, value)?,
            "top_k" => self.top_k = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "barrier_mode" => self.barrier_mode = BarrierMode::from_str(value)?,
            "strategy" => self.strategy = RelevanceStrategy::from_str(value)?,
            other => return Err(Error::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    /// Range-check every field by building the owning-module param sets.
    pub fn validate(&self) -> Result<()> {
        self.embedder()?;
        self.dynamics()?;
        self.retrieval()?;
        if self.top_k == 0 {
            return Err(Error::OutOfRange {
                name: "top_k",
                value: 0.0,
                range: ">= 1",
            });
        }
        Ok(())
    }

    pub fn embedder(&self) -> Result<EmbedderConfig> {
        EmbedderConfig::new(self.dim)
    }

    pub fn dynamics(&self) -> Result<DynamicsParams> {
        DynamicsParams::new(self.alpha_momentum, self.lambda_decay, self.tau_surprise)
    }

    pub fn retrieval(&self) -> Result<RetrievalParams> {
        RetrievalParams::new(
            self.beta_hierarchy,
            self.w_user,
            self.w_topic,
            self.w_time,
            self.time_horizon,
        )
    }

    /// Canonical `key=value` serialization, keys in [`CONFIG_KEYS`] order.
    pub fn canonical(&self) -> String {
        format!(
            "alpha_momentum={}\nbarrier_mode={}\nbeta_hierarchy={}\ndim={}\nlambda_decay={}\nseed={}\nstrategy={}\ntau_surprise={}\ntime_horizon={}\ntop_k={}\nw_time={}\nw_topic={}\nw_user={}\n",
            self.alpha_momentum,
            self.barrier_mode,
            self.beta_hierarchy,
            self.dim,
            self.lambda_decay,
            self.seed,
            self.strategy,
            self.tau_surprise,
            self.time_horizon,
            self.top_k,
            self.w_time,
            self.w_topic,
            self.w_user,
        )
    }

    /// Stable 16-hex-digit digest of the canonical serialization.
    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical().as_bytes()))
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Invalid {
        what: "config value",
        why: format!("{key}={value:?} is not a valid number"),
    })
}
