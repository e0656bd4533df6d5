//! Learned DBP: a convolutional network built from a time-domain DBP plan whose
//! filter taps are trained with Adam on the waveform MSE.

mod adam;
mod model;

pub use adam::Adam;
pub use model::{Gradients, LdbpLayer, LdbpModel, Window};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::signal::DualPolBlock;
use crate::{rng, Error, Result};

/// Default window `N` and per-side trim `M` (1024 in, 852 out).
pub const DEFAULT_WINDOW: usize = 1024;
pub const DEFAULT_TRIM: usize = 86;

/// Scale to unit power per polarization; returns the block and the original
/// power per polarization (W).
pub fn unit_power(block: &DualPolBlock) -> (DualPolBlock, f64) {
    let p = block.mean_power() / 2.0;
    let mut b = block.clone();
    if p > 0.0 {
        b.scale(1.0 / p.sqrt());
    }
    (b, p)
}

/// `floor((len - N) / (L n_s)) + 1`.
pub fn window_count(block_len: usize, window: usize, stride_samples: usize) -> usize {
    if block_len < window || stride_samples == 0 {
        0
    } else {
        (block_len - window) / stride_samples + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset {
    pub inputs: Vec<Window>,
    pub targets: Vec<Window>,
    pub window: usize,
    pub trim: usize,
    /// Sliding factor `L` in symbols.
    pub stride_symbols: usize,
    pub samples_per_symbol: usize,
}

impl TrainingDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Cut aligned input/target windows: inputs are `N` received samples, targets the
/// `N - 2M` clean samples under the window interior. Windows advance by `L n_s`.
pub fn make_dataset(
    rx: &DualPolBlock,
    target: &DualPolBlock,
    window: usize,
    trim: usize,
    stride_symbols: usize,
    sps: usize,
) -> Result<TrainingDataset> {
    if rx.len() != target.len() {
        return Err(Error::ShapeMismatch("received and target blocks differ in length".into()));
    }
    if rx.len() < window {
        return Err(Error::invalid(format!("block of {} samples is shorter than the window {window}", rx.len())));
    }
    if window < 2 * trim + 1 {
        return Err(Error::invalid("window must exceed twice the trim"));
    }
    let stride = stride_symbols * sps;
    let count = window_count(rx.len(), window, stride);
    let starts: Vec<usize> = (0..count).map(|j| j * stride).collect();
    let pairs = crate::exec::map(&starts, |&s| {
        let input = Window { x: rx.x()[s..s + window].to_vec(), y: rx.y()[s..s + window].to_vec() };
        let r = s + trim..s + window - trim;
        let tgt = Window { x: target.x()[r.clone()].to_vec(), y: target.y()[r].to_vec() };
        (input, tgt)
    });
    let (inputs, targets) = pairs.into_iter().unzip();
    Ok(TrainingDataset { inputs, targets, window, trim, stride_symbols, samples_per_symbol: sps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
    /// Also train epsilon (taps only otherwise).
    pub train_epsilon: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 75,
            patience: 5,
            validation_fraction: 0.2,
            batch_size: 32,
            rng_seed: 1,
            train_epsilon: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::invalid("learning rate, batch size and patience must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 0 when the initial model was kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Batch MSE and gradient; windows are evaluated in parallel and summed in order.
pub fn batch_loss_and_gradients(model: &LdbpModel, data: &TrainingDataset, idx: &[usize]) -> Result<(f64, Gradients)> {
    let per = model.output_len(data.window);
    let count = (idx.len() * per * 2) as f64;
    let parts = crate::exec::map(idx, |&i| model.loss_and_gradients(&data.inputs[i], &data.targets[i], count));
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(model);
    for p in parts {
        let (l, g) = p?;
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

/// Sequential reference of [`batch_loss_and_gradients`] (same summation order).
pub fn batch_loss_and_gradients_seq(model: &LdbpModel, data: &TrainingDataset, idx: &[usize]) -> Result<(f64, Gradients)> {
    let per = model.output_len(data.window);
    let count = (idx.len() * per * 2) as f64;
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(model);
    for &i in idx {
        let (l, g) = model.loss_and_gradients(&data.inputs[i], &data.targets[i], count)?;
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

/// MSE over the listed windows, evaluated in parallel.
pub fn dataset_loss(model: &LdbpModel, data: &TrainingDataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let errs = crate::exec::map(idx, |&i| -> Result<f64> {
        let out = model.forward(&data.inputs[i])?;
        let t = &data.targets[i];
        Ok(out.x.iter().zip(&t.x).chain(out.y.iter().zip(&t.y)).map(|(a, b)| (a - b).norm_sqr()).sum())
    });
    let mut total = 0.0;
    for e in errs {
        total += e?;
    }
    let loss = total / (idx.len() * model.output_len(data.window) * 2) as f64;
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite validation loss {loss}")));
    }
    Ok(loss)
}

/// Train with Adam, early stopping on the validation MSE, and return the weights
/// of the best epoch (the initial model if no epoch improved on it). The last
/// `validation_fraction` of the windows is held out.
pub fn train(model: &LdbpModel, data: &TrainingDataset, cfg: &TrainerConfig) -> Result<(LdbpModel, TrainingHistory)> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::invalid("training needs at least two windows"));
    }
    let n_val = ((data.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, data.len() - 1);
    let n_train = data.len() - n_val;
    let val_idx: Vec<usize> = (n_train..data.len()).collect();
    let mut train_idx: Vec<usize> = (0..n_train).collect();

    let mut current = model.clone();
    let mut params = current.parameters(cfg.train_epsilon);
    let mut opt = Adam::new(params.len(), cfg.learning_rate);
    let initial_val = dataset_loss(&current, data, &val_idx)?;
    let mut best = (current.clone(), initial_val, 0usize);
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let mut r = rng::stream(cfg.rng_seed, 0x4550_0000 + epoch as u64);
        train_idx.shuffle(&mut r);
        let mut train_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let (l, g) = batch_loss_and_gradients(&current, data, batch)?;
            if !l.is_finite() {
                return Err(Error::Training(format!("non-finite training loss at epoch {epoch}")));
            }
            train_loss += l * batch.len() as f64;
            let flat = LdbpModel::flatten_gradients(&g, cfg.train_epsilon);
            opt.update(&mut params, &flat);
            current.set_parameters(&params, cfg.train_epsilon);
        }
        train_loss /= n_train as f64;
        let val_loss = dataset_loss(&current, data, &val_idx)?;
        log::debug!("epoch {epoch}: train {train_loss:.6e}, validation {val_loss:.6e}");
        epochs.push(EpochRecord { epoch, train_loss, val_loss });
        if val_loss < best.1 {
            best = (current.clone(), val_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (model, best_val_loss, best_epoch) = best;
    Ok((
        model,
        TrainingHistory { initial_val_loss: initial_val, epochs, best_epoch, best_val_loss, stopped_early },
    ))
}

const CHECKPOINT_FORMAT: &str = "dmlink-ldbp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: LdbpModel,
    pub history: Option<TrainingHistory>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: LdbpModel, history: Option<TrainingHistory>, metadata: BTreeMap<String, String>) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, model, history, metadata }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_str(&text)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint {} v{}", c.format, c.version)));
        }
        Ok(c)
    }
}
