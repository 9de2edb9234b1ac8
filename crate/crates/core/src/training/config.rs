use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, PoolingMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Triplets with explicit negatives.
    #[default]
    AspectCse,
    /// Anchor/positive pairs with in-batch negatives.
    MultipleNegativeRanking,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::AspectCse => "aspectcse",
            Objective::MultipleNegativeRanking => "mnr",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aspectcse" | "aspect_cse" | "contrastive" => Ok(Objective::AspectCse),
            "mnr" | "multiple_negative_ranking" => Ok(Objective::MultipleNegativeRanking),
            _ => Err(Error::InvalidArgument(format!("unknown objective `{s}`"))),
        }
    }
}

fn parse_pooling(s: &str) -> Result<PoolingMode> {
    match s.to_ascii_lowercase().as_str() {
        "mean" => Ok(PoolingMode::Mean),
        "cls" | "first" | "first_token" => Ok(PoolingMode::FirstToken),
        _ => Err(Error::InvalidArgument(format!("unknown pooler type `{s}`"))),
    }
}

/// Training hyperparameters plus the encoder shape used when a fresh model is
/// initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub max_seq_len: usize,
    pub pooling: PoolingMode,
    pub seed: u64,
    pub objective: Objective,
    /// Global gradient-norm clip applied before each optimizer step.
    pub clip_norm: f64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub min_freq: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 14,
            learning_rate: 1e-3,
            temperature: 0.05,
            max_seq_len: 320,
            pooling: PoolingMode::Mean,
            seed: 0,
            objective: Objective::AspectCse,
            clip_norm: 5.0,
            embedding_dim: 64,
            hidden_dim: 64,
            output_dim: 64,
            min_freq: 2,
        }
    }
}

impl TrainConfig {
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            pooling: self.pooling,
            max_seq_len: self.max_seq_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("training_epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_sequence_length", self.max_seq_len),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
            ("min_freq", self.min_freq),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        let reals = [
            ("learning_rate", self.learning_rate),
            ("temperature", self.temperature),
            ("clip_norm", self.clip_norm),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. `#` starts a comment; keys not given
    /// keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::InvalidArgument(format!("config line {}: {msg}", idx + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("bad number `{v}`"))
            }
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "training_epochs" => cfg.epochs = num(value)?,
                    "batch_size" => cfg.batch_size = num(value)?,
                    "learning_rate" => cfg.learning_rate = num(value)?,
                    "temperature" => cfg.temperature = num(value)?,
                    "max_sequence_length" => cfg.max_seq_len = num(value)?,
                    "pooler_type" => cfg.pooling = parse_pooling(value).map_err(|e| e.to_string())?,
                    "seed" => cfg.seed = num(value)?,
                    "objective" => cfg.objective = value.parse().map_err(|e: Error| e.to_string())?,
                    "clip_norm" => cfg.clip_norm = num(value)?,
                    "embedding_dim" => cfg.embedding_dim = num(value)?,
                    "hidden_dim" => cfg.hidden_dim = num(value)?,
                    "output_dim" => cfg.output_dim = num(value)?,
                    "min_freq" => cfg.min_freq = num(value)?,
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            r.map_err(bad)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the configuration in the format accepted by [`TrainConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let pooler = match self.pooling {
            PoolingMode::Mean => "mean",
            PoolingMode::FirstToken => "cls",
        };
        format!(
            "training_epochs = {}\nbatch_size = {}\nlearning_rate = {}\nmax_sequence_length = {}\n\
             pooler_type = {pooler}\ntemperature = {}\nseed = {}\nobjective = {}\nclip_norm = {}\n\
             embedding_dim = {}\nhidden_dim = {}\noutput_dim = {}\nmin_freq = {}\n",
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.max_seq_len,
            self.temperature,
            self.seed,
            self.objective,
            self.clip_norm,
            self.embedding_dim,
            self.hidden_dim,
            self.output_dim,
            self.min_freq,
        )
    }
}
