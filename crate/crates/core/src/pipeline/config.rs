use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Ablations, ModelConfig};
use crate::objectives::LossConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub ablations: Ablations,
    /// `false` trains the backbone jointly with the task head instead of probing.
    pub pretrain: bool,
    pub probe_epochs: usize,
    pub probe_hidden: usize,
    pub probe_lr: f64,
    pub probe_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.01,
            seed: 42,
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            ablations: Ablations::default(),
            pretrain: true,
            probe_epochs: 50,
            probe_hidden: 64,
            probe_lr: 1e-3,
            probe_batch_size: 32,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

impl TrainConfig {
    /// Full-scale profile: 70 epochs at batch 64.
    pub fn full_scale() -> Self {
        TrainConfig {
            epochs: 70,
            batch_size: 64,
            ..TrainConfig::default()
        }
    }

    pub const KEYS: [&'static str; 24] = [
        "epochs",
        "batch_size",
        "lr",
        "weight_decay",
        "seed",
        "d",
        "heads",
        "depth",
        "fusion_depth",
        "tau",
        "w1",
        "w2",
        "mask_prob",
        "mask_span",
        "symmetric",
        "no_inter_modal",
        "no_grid_view",
        "no_align_loss",
        "no_mlm_loss",
        "pretrain",
        "probe_epochs",
        "probe_hidden",
        "probe_lr",
        "probe_batch_size",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "d" => self.model.d = parse(key, v)?,
            "heads" => self.model.heads = parse(key, v)?,
            "depth" => self.model.depth = parse(key, v)?,
            "fusion_depth" => self.model.fusion_depth = parse(key, v)?,
            "tau" => self.loss.tau = parse(key, v)?,
            "w1" => self.loss.w1 = parse(key, v)?,
            "w2" => self.loss.w2 = parse(key, v)?,
            "mask_prob" => self.loss.mask_prob = parse(key, v)?,
            "mask_span" => self.loss.mask_span = parse(key, v)?,
            "symmetric" => self.loss.symmetric = parse(key, v)?,
            "no_inter_modal" => self.ablations.no_inter_modal = parse(key, v)?,
            "no_grid_view" => self.ablations.no_grid_view = parse(key, v)?,
            "no_align_loss" => self.ablations.no_align_loss = parse(key, v)?,
            "no_mlm_loss" => self.ablations.no_mlm_loss = parse(key, v)?,
            "pretrain" => self.pretrain = parse(key, v)?,
            "probe_epochs" => self.probe_epochs = parse(key, v)?,
            "probe_hidden" => self.probe_hidden = parse(key, v)?,
            "probe_lr" => self.probe_lr = parse(key, v)?,
            "probe_batch_size" => self.probe_batch_size = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    /// Flat `key=value` rendering that [`apply_text`](Self::apply_text) reads back.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let l = &self.loss;
        let a = &self.ablations;
        let pairs: Vec<(&str, String)> = vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("seed", self.seed.to_string()),
            ("d", m.d.to_string()),
            ("heads", m.heads.to_string()),
            ("depth", m.depth.to_string()),
            ("fusion_depth", m.fusion_depth.to_string()),
            ("tau", l.tau.to_string()),
            ("w1", l.w1.to_string()),
            ("w2", l.w2.to_string()),
            ("mask_prob", l.mask_prob.to_string()),
            ("mask_span", l.mask_span.to_string()),
            ("symmetric", l.symmetric.to_string()),
            ("no_inter_modal", a.no_inter_modal.to_string()),
            ("no_grid_view", a.no_grid_view.to_string()),
            ("no_align_loss", a.no_align_loss.to_string()),
            ("no_mlm_loss", a.no_mlm_loss.to_string()),
            ("pretrain", self.pretrain.to_string()),
            ("probe_epochs", self.probe_epochs.to_string()),
            ("probe_hidden", self.probe_hidden.to_string()),
            ("probe_lr", self.probe_lr.to_string()),
            ("probe_batch_size", self.probe_batch_size.to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 || self.probe_batch_size == 0 {
            return bad("batch sizes must be >= 1".into());
        }
        if !(self.lr >= 0.0) || !(self.probe_lr >= 0.0) {
            return bad("learning rates must be >= 0".into());
        }
        let m = &self.model;
        if m.heads == 0 || m.d % m.heads != 0 || m.d % 2 != 0 {
            return bad(format!("d={} must be even and divisible by heads={}", m.d, m.heads));
        }
        self.loss.validate().map_err(ConfigError::Invalid)
    }
}
