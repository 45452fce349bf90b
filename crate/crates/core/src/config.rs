//! Tracker configuration and its validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::AffinityWeights;
use crate::association::AssociationParams;
use crate::lifecycle::ConfidenceConfig;
use crate::motion::NoiseConfig;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Every tunable of the tracker. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Appearance share of the total affinity.
    pub lambda: f64,
    /// Motion (IoU) gate.
    pub tau_m: f64,
    /// Appearance gate, shared by assignment, boosting and association.
    pub tau_a: f64,
    /// Minimum observed length of a positive tracklet.
    pub tau_l: usize,
    /// Minimum mean detector confidence of a positive tracklet.
    pub tau_c: f64,
    /// Cap on embeddings compared per tracklet.
    pub n_max: usize,
    /// Consecutive misses tolerated before a tracklet leaves assignment.
    pub max_misses: u32,
    /// Frames a ghost is predicted before it dies.
    pub ghost_limit: u32,
    /// Association runs on frames divisible by this.
    pub association_period: u32,
    pub boost_enabled: bool,
    /// Minimum frame distance between two boosts of one tracklet.
    pub boost_min_gap: u32,
    pub nms_iou: f64,
    pub max_mean_cost: f64,
    /// States are emitted this many frames after they happen.
    pub emission_delay: u32,
    pub appearance_enabled: bool,
    pub association_enabled: bool,
    pub noise: NoiseConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let weights = AffinityWeights::default();
        let confidence = ConfidenceConfig::default();
        Self {
            lambda: weights.lambda,
            tau_m: weights.tau_m,
            tau_a: weights.tau_a,
            tau_l: confidence.tau_l,
            tau_c: confidence.tau_c,
            n_max: weights.n_max,
            max_misses: 2,
            ghost_limit: 90,
            association_period: 20,
            boost_enabled: false,
            boost_min_gap: 2,
            nms_iou: 0.5,
            max_mean_cost: confidence.max_mean_cost,
            emission_delay: 40,
            appearance_enabled: true,
            association_enabled: true,
            noise: NoiseConfig::default(),
        }
    }
}

fn in_range(field: &str, v: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(
            field,
            format!("{field} must be in [{lo},{hi}], got {v}"),
        ))
    }
}

impl TrackerConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: TrackerConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().trim().to_string();
            let field = message.split('`').nth(1).unwrap_or("config").to_string();
            ConfigError::new(field, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        in_range("lambda", self.lambda, 0.0, 1.0)?;
        in_range("tau_m", self.tau_m, 0.0, 1.0)?;
        in_range("tau_a", self.tau_a, -1.0, 1.0)?;
        in_range("tau_c", self.tau_c, 0.0, 1.0)?;
        in_range("nms_iou", self.nms_iou, f64::MIN_POSITIVE, 1.0)?;
        in_range("max_mean_cost", self.max_mean_cost, 0.0, f64::MAX)?;
        if self.tau_l == 0 {
            return Err(ConfigError::new("tau_l", "tau_l must be >= 1"));
        }
        if self.n_max == 0 {
            return Err(ConfigError::new("n_max", "n_max must be >= 1"));
        }
        if self.association_period == 0 {
            return Err(ConfigError::new(
                "association_period",
                "association_period must be >= 1",
            ));
        }
        if self.boost_min_gap == 0 {
            return Err(ConfigError::new(
                "boost_min_gap",
                "boost_min_gap must be >= 1",
            ));
        }
        if self.emission_delay < self.association_period {
            return Err(ConfigError::new(
                "emission_delay",
                format!(
                    "emission_delay ({}) must be >= association_period ({})",
                    self.emission_delay, self.association_period
                ),
            ));
        }
        for (name, v) in self.noise.fields() {
            in_range(&format!("noise.{name}"), v, 0.0, f64::MAX)?;
        }
        for (name, v) in [
            (
                "measurement_position_std",
                self.noise.measurement_position_std,
            ),
            ("measurement_aspect_std", self.noise.measurement_aspect_std),
        ] {
            if v <= 0.0 {
                return Err(ConfigError::new(
                    format!("noise.{name}"),
                    format!("noise.{name} must be positive"),
                ));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> AffinityWeights {
        AffinityWeights {
            lambda: self.lambda,
            tau_m: self.tau_m,
            tau_a: self.tau_a,
            n_max: self.n_max,
        }
    }

    pub fn confidence(&self) -> ConfidenceConfig {
        ConfidenceConfig {
            tau_l: self.tau_l,
            tau_c: self.tau_c,
            max_mean_cost: self.max_mean_cost,
        }
    }

    pub fn association_params(&self) -> AssociationParams {
        AssociationParams {
            tau_a: self.tau_a,
            n_max: self.n_max,
            max_gap: self.ghost_limit,
            confidence: self.confidence(),
        }
    }
}
