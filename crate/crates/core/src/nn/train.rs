//! Mini-batch training with plateau LR reduction and early stopping.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::model::Model;
use crate::error::{invalid, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub max_epochs: usize,
    pub lr_reduce_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            initial_lr: 0.001,
            max_epochs: 50,
            lr_reduce_factor: 0.1,
            lr_patience: 2,
            early_stop_patience: 6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(invalid("batch_size and max_epochs must be positive"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(invalid("initial_lr must be positive"));
        }
        if !(self.lr_reduce_factor > 0.0 && self.lr_reduce_factor < 1.0) {
            return Err(invalid("lr_reduce_factor must lie in (0, 1)"));
        }
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return Err(invalid("patiences must be at least 1"));
        }
        Ok(())
    }
}

/// What the callbacks decided after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochDecision {
    pub improved: bool,
    pub reduce_lr: bool,
    pub stop: bool,
}

/// Both callbacks share the notion of improvement (strictly lower validation
/// loss than the best so far) but keep separate wait counters; the LR
/// counter restarts after each reduction.
#[derive(Debug, Clone)]
pub struct Callbacks {
    best: f64,
    lr_wait: usize,
    stop_wait: usize,
    lr_patience: usize,
    stop_patience: usize,
}

impl Callbacks {
    pub fn new(lr_patience: usize, stop_patience: usize) -> Self {
        Callbacks { best: f64::INFINITY, lr_wait: 0, stop_wait: 0, lr_patience, stop_patience }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> EpochDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.lr_wait = 0;
            self.stop_wait = 0;
            return EpochDecision { improved: true, reduce_lr: false, stop: false };
        }
        self.lr_wait += 1;
        self.stop_wait += 1;
        let reduce_lr = self.lr_wait >= self.lr_patience;
        if reduce_lr {
            self.lr_wait = 0;
        }
        EpochDecision { improved: false, reduce_lr, stop: self.stop_wait >= self.stop_patience }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.epochs {
            out.serialize(e).map_err(|e| invalid(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// Labelled images borrowed from the caller.
#[derive(Debug, Clone, Copy)]
pub struct DataSet<'a> {
    pub images: &'a [Vec<f32>],
    pub labels: &'a [usize],
}

impl DataSet<'_> {
    fn check(&self, what: &str) -> Result<()> {
        if self.images.is_empty() {
            return Err(invalid(format!("{what} set is empty")));
        }
        if self.images.len() != self.labels.len() {
            return Err(invalid(format!("{what} set: {} images, {} labels", self.images.len(), self.labels.len())));
        }
        Ok(())
    }
}

/// Mean loss and accuracy in eval mode, in batches.
pub fn evaluate(model: &Model<f32>, data: DataSet<'_>, batch_size: usize) -> Result<(f64, f64)> {
    data.check("evaluation")?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (imgs, labels) in data.images.chunks(batch_size).zip(data.labels.chunks(batch_size)) {
        let refs: Vec<&[f32]> = imgs.iter().map(Vec::as_slice).collect();
        let (l, c) = model.eval_loss(&refs, labels)?;
        loss += l * labels.len() as f64;
        correct += c;
    }
    let n = data.labels.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains in place and returns the parameters of the epoch with the lowest
/// validation loss together with the per-epoch history. Shuffling uses
/// SplitMix64 seeded with `cfg.seed`; dropout masks use ChaCha8 seeded with
/// the bitwise complement of it.
pub fn train(
    mut model: Model<f32>,
    train_set: DataSet<'_>,
    val_set: DataSet<'_>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model<f32>, TrainHistory)> {
    cfg.validate()?;
    train_set.check("training")?;
    val_set.check("validation")?;
    let mut shuffle_rng = SplitMix64::new(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(!cfg.seed);
    let mut opt = AdamState::for_params(&model.params);
    let mut callbacks = Callbacks::new(cfg.lr_patience, cfg.early_stop_patience);
    let mut reductions = 0;
    let mut lr = cfg.initial_lr;
    let mut best = model.clone();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.images.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.batch_size) {
            let imgs: Vec<&[f32]> = batch.iter().map(|&i| train_set.images[i].as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let step = model.loss_and_grads(&imgs, &labels, &mut dropout_rng)?;
            model.update_running_stats(&step.stats);
            adam_step(&mut model.params, &step.grads, &mut opt, lr)?;
            loss_sum += step.loss * batch.len() as f64;
            correct += step.correct;
        }
        let n = order.len() as f64;
        let (val_loss, val_acc) = evaluate(&model, val_set, cfg.batch_size)?;
        let record = EpochRecord { epoch, train_loss: loss_sum / n, train_acc: correct as f64 / n, val_loss, val_acc, lr };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.3} val_loss {:.4} val_acc {:.3} lr {lr:e}",
            record.train_loss,
            record.train_acc,
            val_loss,
            val_acc
        );
        on_epoch(&record);
        history.epochs.push(record);

        let decision = callbacks.observe(val_loss);
        if decision.improved {
            best = model.clone();
            history.best_epoch = epoch;
        }
        if decision.stop {
            history.stopped_early = true;
            log::info!("early stop after epoch {epoch}; best epoch {}", history.best_epoch);
            break;
        }
        if decision.reduce_lr {
            reductions += 1;
            lr = cfg.initial_lr * cfg.lr_reduce_factor.powi(reductions);
            log::info!("learning rate reduced to {lr:e}");
        }
    }
    Ok((best, history))
}
