//! Run configuration: JSON file values, overridden by environment variables
//! and flags, resolved once before any stage runs.

use std::path::Path;

use clap::Args;
use flowsentry::autoencoder::ModelConfig;
use flowsentry::ingest::{FeatureSpec, DEFAULT_FEATURES, DEFAULT_LABEL_COLUMN};
use flowsentry::pipeline::PreprocessConfig;
use flowsentry::synth::{SynthConfig, DEFAULT_NOISE_RATIO};
use flowsentry::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every tunable parameter, all optional. Used both for the config file and
/// for the command-line layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Feature columns, comma separated
    #[arg(long, global = true, value_delimiter = ',', env = "FLOWSENTRY_FEATURES")]
    pub features: Option<Vec<String>>,
    /// Label column name
    #[arg(long, global = true, env = "FLOWSENTRY_LABEL_COLUMN")]
    pub label_column: Option<String>,
    /// Window length t
    #[arg(long, global = true, env = "FLOWSENTRY_TIMESTEPS")]
    pub timesteps: Option<usize>,
    /// LSTM units per layer
    #[arg(long, global = true, env = "FLOWSENTRY_UNITS")]
    pub units: Option<usize>,
    /// Dropout rate
    #[arg(long, global = true, env = "FLOWSENTRY_DROPOUT")]
    pub dropout: Option<f64>,
    #[arg(long, global = true, env = "FLOWSENTRY_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, global = true, env = "FLOWSENTRY_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long = "lr", global = true, env = "FLOWSENTRY_LR")]
    pub learning_rate: Option<f64>,
    /// Seed for synthesis, splitting, initialization, shuffling and dropout
    #[arg(long, global = true, env = "FLOWSENTRY_SEED")]
    pub seed: Option<u64>,
    /// Share of benign rows used for training
    #[arg(long, global = true, env = "FLOWSENTRY_TRAIN_FRACTION")]
    pub train_fraction: Option<f64>,
    /// Share of attack rows sampled into the test set
    #[arg(long, global = true, env = "FLOWSENTRY_ATTACK_FRACTION")]
    pub attack_fraction: Option<f64>,
    /// Synthetic benign row count
    #[arg(long = "benign", global = true, env = "FLOWSENTRY_BENIGN")]
    pub n_benign: Option<usize>,
    /// Synthetic attack row count
    #[arg(long = "attack", global = true, env = "FLOWSENTRY_ATTACK")]
    pub n_attack: Option<usize>,
    /// Synthetic attack shift in benign standard deviations
    #[arg(long, global = true, env = "FLOWSENTRY_SHIFT")]
    pub shift: Option<f64>,
    /// Synthetic noise standard deviation as a fraction of amplitude
    #[arg(long, global = true, env = "FLOWSENTRY_NOISE_RATIO")]
    pub noise_ratio: Option<f64>,
}

macro_rules! layer {
    ($top:expr, $bottom:expr, $($field:ident),+) => {
        Overrides { $($field: $top.$field.clone().or_else(|| $bottom.$field.clone())),+ }
    };
}

impl Overrides {
    /// Fields set here win over `lower`.
    pub fn over(&self, lower: &Overrides) -> Overrides {
        layer!(
            self, lower, features, label_column, timesteps, units, dropout, epochs, batch_size,
            learning_rate, seed, train_fraction, attack_fraction, n_benign, n_attack, shift, noise_ratio
        )
    }

    pub fn load(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parameter(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved configuration, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub features: Vec<String>,
    pub label_column: String,
    pub timesteps: usize,
    pub units: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub attack_fraction: f64,
    pub n_benign: usize,
    pub n_attack: usize,
    pub shift: f64,
    pub noise_ratio: f64,
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> Result<RunConfig> {
        let model = ModelConfig::default();
        let prep = PreprocessConfig::default();
        let synth = SynthConfig::default();
        let rc = RunConfig {
            features: o
                .features
                .clone()
                .unwrap_or_else(|| DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect()),
            label_column: o.label_column.clone().unwrap_or_else(|| DEFAULT_LABEL_COLUMN.to_string()),
            timesteps: o.timesteps.unwrap_or(model.timesteps),
            units: o.units.unwrap_or(model.units),
            dropout: o.dropout.unwrap_or(model.dropout),
            epochs: o.epochs.unwrap_or(model.epochs),
            batch_size: o.batch_size.unwrap_or(model.batch_size),
            learning_rate: o.learning_rate.unwrap_or(model.learning_rate),
            seed: o.seed.unwrap_or(model.seed),
            train_fraction: o.train_fraction.unwrap_or(prep.train_fraction),
            attack_fraction: o.attack_fraction.unwrap_or(prep.attack_fraction),
            n_benign: o.n_benign.unwrap_or(synth.n_benign),
            n_attack: o.n_attack.unwrap_or(synth.n_attack),
            shift: o.shift.unwrap_or(synth.shift),
            noise_ratio: o.noise_ratio.unwrap_or(DEFAULT_NOISE_RATIO),
        };
        rc.feature_spec()?;
        rc.model_config().validate()?;
        rc.synth_config().validate()?;
        Ok(rc)
    }

    pub fn feature_spec(&self) -> Result<FeatureSpec> {
        FeatureSpec::new(self.features.iter().cloned(), self.label_column.clone())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            timesteps: self.timesteps,
            features: self.features.len(),
            units: self.units,
            dropout: self.dropout,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        Ok(PreprocessConfig {
            features: self.feature_spec()?,
            train_fraction: self.train_fraction,
            attack_fraction: self.attack_fraction,
            seed: self.seed,
        })
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_benign: self.n_benign,
            n_attack: self.n_attack,
            shift: self.shift,
            seed: self.seed,
            ..SynthConfig::default()
        }
        .with_noise_ratio(self.noise_ratio)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
