//! The six-layer LSTM autoencoder:
//! input → LSTM encoder → repeat vector → LSTM decoder → time-distributed
//! dense → output.
//!
//! The encoder keeps only its final hidden state. That code vector is tiled
//! once per timestep and fed to the decoder, whose full hidden sequence is
//! projected back to the feature width. Dropout sits on the code vector and on
//! the decoder output sequence. The projection is linear.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_file, write_file};
use crate::lstm::{
    adam_step, dense_backward_into, dense_forward, dropout, grad_check, layer_backward_into, layer_forward,
    AdamConfig, AdamState, DenseParams, GateCache, GradCheckReport, LstmCellParams, Mode,
};
use crate::windowing::SequenceBatch;

const MODEL_VERSION: u32 = 1;

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub timesteps: usize,
    pub features: usize,
    pub units: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            timesteps: 10,
            features: 5,
            units: 16,
            dropout: 0.2,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("timesteps", self.timesteps),
            ("features", self.features),
            ("units", self.units),
            ("batch size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// All trainable parameters plus the config they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    pub projection: DenseParams,
}

/// Gradient accumulator shaped like [`ModelWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    pub projection: DenseParams,
}

impl ModelGrads {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            encoder: LstmCellParams::zeros(config.units, config.features),
            decoder: LstmCellParams::zeros(config.units, config.units),
            projection: DenseParams::zeros(config.units, config.features),
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.encoder.blocks().to_vec();
        v.extend(self.decoder.blocks());
        v.extend(self.projection.blocks());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.encoder.blocks_mut().into_iter().collect();
        v.extend(self.decoder.blocks_mut());
        v.extend(self.projection.blocks_mut());
        v
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }
}

impl ModelWeights {
    pub fn zeros(config: &ModelConfig) -> Self {
        let g = ModelGrads::zeros(config);
        Self {
            config: config.clone(),
            encoder: g.encoder,
            decoder: g.decoder,
            projection: g.projection,
        }
    }

    /// Parameter blocks in a fixed order: encoder gates, decoder gates, projection.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.encoder.blocks().to_vec();
        v.extend(self.decoder.blocks());
        v.extend(self.projection.blocks());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.encoder.blocks_mut().into_iter().collect();
        v.extend(self.decoder.blocks_mut());
        v.extend(self.projection.blocks_mut());
        v
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    /// Copy of `self` with every parameter replaced from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<ModelWeights> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut out = self.clone();
        let mut off = 0;
        for b in out.blocks_mut() {
            let n = b.len();
            b.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.projection.validate()?;
        let c = &self.config;
        let ok = self.encoder.units == c.units
            && self.encoder.input_dim == c.features
            && self.decoder.units == c.units
            && self.decoder.input_dim == c.units
            && self.projection.input_dim == c.units
            && self.projection.output_dim == c.features;
        if !ok {
            return Err(Error::Shape("layer dimensions do not match the model config".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            version: MODEL_VERSION,
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            projection: self.projection.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(json)?;
        if header.version != MODEL_VERSION {
            return Err(Error::Version {
                kind: "model",
                found: header.version,
                expected: MODEL_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(json)?;
        let w = ModelWeights {
            config: file.config,
            encoder: file.encoder,
            decoder: file.decoder,
            projection: file.projection,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    config: ModelConfig,
    encoder: LstmCellParams,
    decoder: LstmCellParams,
    projection: DenseParams,
}

/// Seeded initialization: Glorot-uniform weights, zero biases.
pub fn build(config: &ModelConfig) -> Result<ModelWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(ModelWeights {
        config: config.clone(),
        encoder: LstmCellParams::init(config.units, config.features, &mut rng),
        decoder: LstmCellParams::init(config.units, config.units, &mut rng),
        projection: DenseParams::init(config.units, config.features, &mut rng),
    })
}

/// Intermediate values of one window's forward pass.
struct Trace {
    encoder: GateCache,
    code_mask: Option<Vec<f64>>,
    decoder: GateCache,
    decoder_mask: Option<Vec<f64>>,
    projection_input: Vec<f64>,
    reconstruction: Vec<f64>,
}

fn check_batch(w: &ModelWeights, batch: &SequenceBatch) -> Result<()> {
    let c = &w.config;
    if batch.timesteps() != c.timesteps || batch.features() != c.features {
        return Err(Error::Shape(format!(
            "batch windows are {}x{}, model expects {}x{}",
            batch.timesteps(),
            batch.features(),
            c.timesteps,
            c.features
        )));
    }
    Ok(())
}

fn forward_window(w: &ModelWeights, x: &[f64], mode: Mode, rng: &mut impl Rng) -> Result<Trace> {
    let rate = w.config.dropout;
    let (last_hidden, encoder) = layer_forward(&w.encoder, x, false)?;
    let (code, code_mask) = dropout(&last_hidden, rate, mode, rng)?;
    let repeated = code.repeat(w.config.timesteps);
    let (decoded, decoder) = layer_forward(&w.decoder, &repeated, true)?;
    let (projection_input, decoder_mask) = dropout(&decoded, rate, mode, rng)?;
    let reconstruction = dense_forward(&w.projection, &projection_input)?;
    Ok(Trace {
        encoder,
        code_mask,
        decoder,
        decoder_mask,
        projection_input,
        reconstruction,
    })
}

fn backward_window(w: &ModelWeights, trace: &Trace, d_recon: &[f64], grads: &mut ModelGrads) -> Result<()> {
    let units = w.config.units;
    let mut d_decoded = dense_backward_into(&w.projection, &trace.projection_input, d_recon, &mut grads.projection)?;
    if let Some(mask) = &trace.decoder_mask {
        d_decoded.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }
    let d_repeated = layer_backward_into(&w.decoder, &trace.decoder, &d_decoded, &mut grads.decoder)?;
    let mut d_code = vec![0.0; units];
    for step in d_repeated.chunks_exact(units) {
        d_code.iter_mut().zip(step).for_each(|(a, b)| *a += b);
    }
    if let Some(mask) = &trace.code_mask {
        d_code.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }
    layer_backward_into(&w.encoder, &trace.encoder, &d_code, &mut grads.encoder)?;
    Ok(())
}

/// Reconstructs every window. `rng` only matters in train mode.
pub fn forward(w: &ModelWeights, batch: &SequenceBatch, mode: Mode, rng: &mut impl Rng) -> Result<SequenceBatch> {
    check_batch(w, batch)?;
    let mut out = Vec::with_capacity(batch.as_slice().len());
    for k in 0..batch.len() {
        out.extend(forward_window(w, batch.window(k), mode, rng)?.reconstruction);
    }
    batch.with_data(out)
}

/// Inference-mode [`forward`].
pub fn reconstruct(w: &ModelWeights, batch: &SequenceBatch) -> Result<SequenceBatch> {
    // infer mode never draws from the generator
    forward(w, batch, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))
}

/// Mean absolute error over every element.
pub fn mae(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape(format!("{} targets, {} reconstructions", x.len(), x_hat.len())));
    }
    if x.is_empty() {
        return Err(Error::EmptyData("MAE of nothing".into()));
    }
    Ok(x.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

pub fn mae_loss(x: &SequenceBatch, x_hat: &SequenceBatch) -> Result<f64> {
    if x.len() != x_hat.len() || x.window_len() != x_hat.window_len() {
        return Err(Error::Shape("batches are not congruent".into()));
    }
    mae(x.as_slice(), x_hat.as_slice())
}

/// Loss and summed gradient over `windows` of `batch`, forward in `mode`.
fn batch_gradient(
    w: &ModelWeights,
    batch: &SequenceBatch,
    windows: &[usize],
    mode: Mode,
    rng: &mut impl Rng,
    grads: &mut ModelGrads,
) -> Result<f64> {
    let elems = (windows.len() * batch.window_len()) as f64;
    let mut abs_sum = 0.0;
    let mut d_recon = vec![0.0; batch.window_len()];
    for &k in windows {
        let x = batch.window(k);
        let trace = forward_window(w, x, mode, rng)?;
        for ((d, r), t) in d_recon.iter_mut().zip(&trace.reconstruction).zip(x) {
            let diff = r - t;
            abs_sum += diff.abs();
            // d|r - t|/dr, with 0 at the kink
            *d = if diff > 0.0 {
                1.0 / elems
            } else if diff < 0.0 {
                -1.0 / elems
            } else {
                0.0
            };
        }
        backward_window(w, &trace, &d_recon, grads)?;
    }
    Ok(abs_sum / elems)
}

/// MAE over the whole batch and its gradient, dropout disabled.
pub fn loss_and_gradient(w: &ModelWeights, batch: &SequenceBatch) -> Result<(f64, ModelGrads)> {
    check_batch(w, batch)?;
    let mut grads = ModelGrads::zeros(&w.config);
    let all: Vec<usize> = (0..batch.len()).collect();
    let loss = batch_gradient(w, batch, &all, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0), &mut grads)?;
    Ok((loss, grads))
}

/// Finite-difference check of [`loss_and_gradient`] on `samples` random parameters.
pub fn check_gradients(w: &ModelWeights, batch: &SequenceBatch, samples: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_gradient(w, batch)?;
    let loss = |flat: &[f64]| {
        let probe = w.with_flat(flat).expect("flat length is fixed");
        mae_loss(batch, &reconstruct(&probe, batch).expect("shapes checked")).expect("shapes checked")
    };
    Ok(grad_check(loss, &w.to_flat(), &grads.to_flat(), samples, seed, tolerance))
}

/// Per-epoch losses and timings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Element-weighted mean of the mini-batch MAE, dropout active.
    pub train_loss: Vec<f64>,
    /// Inference-mode MAE on the validation windows, when supplied.
    pub val_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    /// Equality ignoring wall-clock timings.
    pub fn same_losses(&self, other: &TrainReport) -> bool {
        self.train_loss == other.train_loss && self.val_loss == other.val_loss
    }

    pub fn epoch_time_mean_std(&self) -> (f64, f64) {
        mean_std(&self.epoch_seconds)
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mini-batch Adam on MAE over `windows`, for `config.epochs` epochs.
///
/// Window order is reshuffled each epoch and the final partial batch is kept.
/// Shuffling and dropout draw from a generator seeded by `config.seed`.
pub fn train(
    initial: &ModelWeights,
    windows: &SequenceBatch,
    validation: Option<&SequenceBatch>,
) -> Result<(ModelWeights, TrainReport)> {
    initial.validate()?;
    check_batch(initial, windows)?;
    if let Some(v) = validation {
        check_batch(initial, v)?;
    }
    let config = initial.config.clone();
    let mut w = initial.clone();
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        return Ok((w, report));
    }
    if windows.is_empty() {
        return Err(Error::EmptyData("no training windows".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let sizes: Vec<usize> = w.blocks().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(config.adam(), &sizes);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut grads = ModelGrads::zeros(&config);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            for b in grads.blocks_mut() {
                b.iter_mut().for_each(|v| *v = 0.0);
            }
            let loss = batch_gradient(&w, windows, chunk, Mode::Train, &mut rng, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step });
            }
            weighted += loss * chunk.len() as f64;
            let g = grads.blocks();
            adam_step(&mut w.blocks_mut(), &g, &mut adam)?;
        }
        report.train_loss.push(weighted / windows.len() as f64);
        if let Some(v) = validation.filter(|v| !v.is_empty()) {
            report.val_loss.push(mae_loss(v, &reconstruct(&w, v)?)?);
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok((w, report))
}
