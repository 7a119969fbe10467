use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::graph::SplitSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingKind {
    Cgipool,
    CgipoolRs,
    CgipoolNoMi,
    Topk,
    Sagpool,
}

impl PoolingKind {
    pub const ALL: [PoolingKind; 5] = [
        PoolingKind::Cgipool,
        PoolingKind::CgipoolRs,
        PoolingKind::CgipoolNoMi,
        PoolingKind::Topk,
        PoolingKind::Sagpool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolingKind::Cgipool => "cgipool",
            PoolingKind::CgipoolRs => "cgipool-rs",
            PoolingKind::CgipoolNoMi => "cgipool-no-mi",
            PoolingKind::Topk => "topk",
            PoolingKind::Sagpool => "sagpool",
        }
    }

    /// Whether the infomax term is part of the objective.
    pub fn uses_mi(self) -> bool {
        matches!(self, PoolingKind::Cgipool | PoolingKind::CgipoolRs)
    }
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolingKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        PoolingKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| TrainError::Config(format!("unknown pooling kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub pooling_ratio: f64,
    pub alpha: f64,
    pub pooling_kind: PoolingKind,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            n_blocks: 3,
            pooling_ratio: 0.8,
            alpha: 0.001,
            pooling_kind: PoolingKind::Cgipool,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.hidden_dim == 0 || self.n_blocks == 0 {
            return Err(TrainError::Config("hidden_dim and n_blocks must be >= 1".into()));
        }
        if !(self.pooling_ratio > 0.0 && self.pooling_ratio <= 1.0) {
            return Err(TrainError::Config(format!(
                "pooling ratio {} outside (0, 1]",
                self.pooling_ratio
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(TrainError::Config(format!("alpha {} must be >= 0", self.alpha)));
        }
        Ok(())
    }

    /// MI weight used by the objective: `alpha`, or zero for kinds without it.
    pub fn effective_alpha(&self) -> f64 {
        if self.pooling_kind.uses_mi() {
            self.alpha
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub n_repeats: usize,
    pub split: SplitSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            weight_decay: 0.0001,
            batch_size: 128,
            patience_epochs: 100,
            max_epochs: 1000,
            n_repeats: 20,
            split: SplitSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config(
                "learning_rate must be > 0 and weight_decay >= 0".into(),
            ));
        }
        if self.batch_size == 0 || self.patience_epochs == 0 || self.max_epochs == 0 {
            return Err(TrainError::Config(
                "batch_size, patience_epochs and max_epochs must be >= 1".into(),
            ));
        }
        if self.n_repeats == 0 {
            return Err(TrainError::Config("n_repeats must be >= 1".into()));
        }
        self.split
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }
}
