use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{build_samples, split_indices, DatasetSource, Sample};
use super::optim::{Adam, AdamConfig};
use crate::autodiff::Tape;
use crate::corruption::CorruptionSpec;
use crate::error::{Error, Result};
use crate::losses::{objective, LossSpec};
use crate::models::{Mode, Model, ModelConfig, Reconstruction};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Real, Tensor};

fn default_batch() -> usize {
    4
}
fn default_patience() -> usize {
    10
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossSpec,
    pub corruption: CorruptionSpec,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Image side length.
    pub size: usize,
    pub dataset: DatasetSource,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.corruption.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.size < 16 || self.size % 2 != 0 {
            return Err(Error::config(format!("image size must be even and at least 16, got {}", self.size)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent when the dataset is too small for a validation split.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss.
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Loss, parameters and gradient of one minibatch; updates the model in
/// training mode.
fn train_step(
    model: &mut Model<f32>,
    adam: &mut Adam<f32>,
    loss: &LossSpec,
    batch: &[&Sample<f32>],
) -> Result<f64> {
    let stack = |f: fn(&Sample<f32>) -> &Tensor<f32>| Tensor::stack(&batch.iter().map(|s| f(s)).collect::<Vec<_>>());
    let (k, img, tk) = (stack(|s| &s.kspace)?, stack(|s| &s.image)?, stack(|s| &s.target_kspace)?);
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, true);
    let x = tape.constant(k);
    let (rec, updates) = model.forward(&mut tape, &bound, x, Mode::Train)?;
    let target = Reconstruction { kspace: tape.constant(tk), image: tape.constant(img) };
    let l = objective(&mut tape, loss, rec, target)?;
    let value = tape.value(l).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("training loss became {value}")));
    }
    let mut grads = tape.backward(l)?;
    let grads: Vec<Option<Tensor<f32>>> = bound.vars().iter().map(|&v| grads.take(v)).collect();
    if grads.iter().flatten().any(|g| !g.all_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    adam.step(&mut model.params, &grads);
    model.apply_bn_updates(&updates);
    Ok(value)
}

/// Mean objective over `samples` with eval-mode batch norm.
pub fn mean_loss<T: Real>(model: &Model<T>, loss: &LossSpec, samples: &[&Sample<T>], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in samples.chunks(batch_size.max(1)) {
        let stack = |f: fn(&Sample<T>) -> &Tensor<T>| Tensor::stack(&batch.iter().map(|s| f(s)).collect::<Vec<_>>());
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape, false);
        let x = tape.constant(stack(|s| &s.kspace)?);
        let (rec, _) = model.forward(&mut tape, &bound, x, Mode::Eval)?;
        let target =
            Reconstruction { kspace: tape.constant(stack(|s| &s.target_kspace)?), image: tape.constant(stack(|s| &s.image)?) };
        let l = objective(&mut tape, loss, rec, target)?;
        total += tape.value(l).data()[0].to_f64_lossy() * batch.len() as f64;
        count += batch.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Output files of a run directory.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
}

impl RunFiles {
    pub fn last_checkpoint(&self) -> PathBuf {
        self.dir.join("last.ilcr")
    }
    pub fn best_checkpoint(&self) -> PathBuf {
        self.dir.join("best.ilcr")
    }
    pub fn loss_csv(&self) -> PathBuf {
        self.dir.join("losses.csv")
    }
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in history {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), val])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains on already-built samples. Each epoch reshuffles the training
/// split, reports through `progress` and, with `out_dir`, writes the latest
/// checkpoint, the best checkpoint and the loss history.
pub fn train_on_samples(
    config: &TrainConfig,
    samples: &[Sample<f32>],
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    let files = out_dir.map(|d| RunFiles { dir: d.to_path_buf() });
    if let Some(f) = &files {
        std::fs::create_dir_all(&f.dir)?;
    }
    let (mut train_idx, val_idx) = if samples.len() >= 5 { split_indices(samples.len(), config.seed) } else { ((0..samples.len()).collect(), Vec::new()) };
    let val: Vec<&Sample<f32>> = val_idx.iter().map(|&i| &samples[i]).collect();

    let mut model = Model::<f32>::new(config.model.clone(), config.seed)?;
    let mut adam = Adam::new(config.optimizer, &model.params);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut stream_rng(config.seed, epoch as u64, Stream::Shuffle));
        let mut total = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let batch: Vec<&Sample<f32>> = chunk.iter().map(|&i| &samples[i]).collect();
            total += train_step(&mut model, &mut adam, &config.loss, &batch)? * batch.len() as f64;
        }
        let train_loss = total / train_idx.len() as f64;
        let val_loss = if val.is_empty() { None } else { Some(mean_loss(&model, &config.loss, &val, config.batch_size)?) };
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("validation loss became {v} at epoch {epoch}")));
            }
        }
        let record = EpochRecord { epoch, train_loss, val_loss };
        progress(&record);
        history.push(record);

        let score = val_loss.unwrap_or(train_loss);
        let improved = best.as_ref().map_or(true, |(b, _, _)| score < *b);
        if improved {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let Some(f) = &files {
            model.save(f.last_checkpoint())?;
            if improved {
                model.save(f.best_checkpoint())?;
            }
            write_history(&f.loss_csv(), &history)?;
        }
        if since_best >= config.patience {
            stopped_early = true;
            break;
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, 0),
    };
    Ok(TrainOutcome { model, history, best_epoch, stopped_early })
}

/// Loads or generates the dataset, corrupts it and trains.
pub fn train(config: &TrainConfig, out_dir: Option<&Path>, progress: &mut dyn FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    config.validate()?;
    let images = config.dataset.load(config.size, config.seed)?;
    let samples = build_samples::<f32>(&images, &config.corruption, config.seed)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join("config.json"))?;
        f.write_all(serde_json::to_string_pretty(config)?.as_bytes())?;
    }
    train_on_samples(config, &samples, out_dir, progress)
}
