use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use super::{save_checkpoint, Model, Tensor3};
use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::signal::SeededRng;

const SHUFFLE_STREAM: u64 = 0x7368_7566;
const DROPOUT_STREAM: u64 = 0x6472_6f70;

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,val_acc,lr";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// LR multiplier applied every `lr_step_epochs` epochs.
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Drives shuffling and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
            lr_decay: 0.5,
            lr_step_epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} outside (0, 1]", self.lr_decay));
        }
        if self.lr_step_epochs < 1 || !(self.lr > 0.0) {
            return bad("learning rate and step must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    /// Learning rate during 0-based epoch `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_step_epochs) as i32)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, t: 0 }
    }

    pub fn step(&mut self, model: &mut Model, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for p in model.params_mut() {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                p.m[i] = b1 * p.m[i] + (1.0 - b1) * g;
                p.v[i] = b2 * p.v[i] + (1.0 - b2) * g * g;
                p.value[i] -= lr * (p.m[i] / bc1) / ((p.v[i] / bc2).sqrt() + eps);
            }
        }
    }
}

/// Record order for 0-based `epoch`.
pub fn batch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeededRng::new(seed, SHUFFLE_STREAM).derive(epoch as u64));
    order
}

/// (batch, 2, 4096) tensor: channel 0 is I, channel 1 is Q.
pub fn records_to_tensor(records: &[&DatasetRecord]) -> Tensor3 {
    let len = records.first().map_or(0, |r| r.iq.len());
    let mut t = Tensor3::zeros(records.len(), 2, len);
    for (b, r) in records.iter().enumerate() {
        let s = t.sample_mut(b);
        let (i, q) = s.split_at_mut(len);
        for (k, z) in r.iq.iter().enumerate() {
            i[k] = z.re as f64;
            q[k] = z.im as f64;
        }
    }
    t
}

/// Mean loss and top-1 accuracy in inference mode.
pub fn evaluate_loss_accuracy(model: &Model, records: &[DatasetRecord], batch_size: usize) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to evaluate".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in records.chunks(batch_size.max(1)) {
        let refs: Vec<&DatasetRecord> = chunk.iter().collect();
        let x = records_to_tensor(&refs);
        let labels: Vec<usize> = chunk.iter().map(|r| r.label_id as usize).collect();
        let logits = model.logits(&x)?;
        let c = logits.channels();
        for (row, &y) in logits.data().chunks_exact(c).zip(&labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            // argmax, ties to the lower label
            let pred = row.iter().enumerate().fold(0, |best, (k, v)| if *v > row[best] { k } else { best });
            correct += (pred == y) as usize;
        }
    }
    Ok((loss / records.len() as f64, correct as f64 / records.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.8},{:.8},{:.6},{:.3e}",
            self.epoch, self.train_loss, self.val_loss, self.val_acc, self.lr
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// 1-based epoch with the best validation accuracy (earliest on ties).
    pub best_epoch: usize,
    pub best: Model,
}

/// Minibatch Adam training. `on_epoch` sees each epoch's log line and
/// whether it is the best so far.
pub fn train(
    model: &mut Model,
    train_set: &[DatasetRecord],
    val_set: &[DatasetRecord],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Model, bool) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be nonempty".into()));
    }
    let classes = model.class_count();
    for r in train_set.iter().chain(val_set) {
        if r.label_id as usize >= classes {
            return Err(Error::ClassCountMismatch { model: classes, data: r.label_id as usize + 1 });
        }
    }
    let (c, l) = model.input_shape();
    if c != 2 || train_set.iter().chain(val_set).any(|r| r.iq.len() != l) {
        return Err(Error::ShapeMismatch {
            expected: format!("records of {l} complex samples into {c} channels"),
            actual: "records of another length".into(),
        });
    }

    let mut adam = Adam::new(config.beta1, config.beta2, config.eps);
    let dropout_root = SeededRng::new(config.seed, DROPOUT_STREAM);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let order = batch_order(train_set.len(), config.seed, epoch);
        let mut dropout = dropout_root.derive(epoch as u64);
        model.set_training(true);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&DatasetRecord> = idx.iter().map(|&i| &train_set[i]).collect();
            let x = records_to_tensor(&refs);
            let labels: Vec<usize> = refs.iter().map(|r| r.label_id as usize).collect();
            model.zero_grads();
            let loss = model.loss_and_backward(&x, &labels, Some(&mut dropout))?;
            if !loss.is_finite() {
                model.set_training(false);
                return Err(Error::Diverged { epoch: epoch + 1, batch: bi + 1 });
            }
            total += loss * idx.len() as f64;
            adam.step(model, lr);
        }
        model.set_training(false);
        let (val_loss, val_acc) = evaluate_loss_accuracy(model, val_set, config.batch_size)?;
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss: total / train_set.len() as f64,
            val_loss,
            val_acc,
            lr,
        };
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, batch: order.len().div_ceil(config.batch_size) });
        }
        let improved = best.as_ref().is_none_or(|(_, acc, _)| val_acc > *acc);
        if improved {
            best = Some((epoch + 1, val_acc, model.clone()));
        }
        on_epoch(&entry, model, improved)?;
        log.push(entry);
    }
    let (best_epoch, _, best) = best.expect("at least one epoch");
    Ok(TrainOutcome { log, best_epoch, best })
}

/// [`train`], streaming the CSV log to `log_path` and saving the best model
/// to `checkpoint_path` whenever validation accuracy improves.
pub fn train_to_files(
    model: &mut Model,
    train_set: &[DatasetRecord],
    val_set: &[DatasetRecord],
    config: &TrainConfig,
    checkpoint_path: &Path,
    log_path: &Path,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let mut log = BufWriter::new(File::create(log_path)?);
    writeln!(log, "{LOG_HEADER}")?;
    log.flush()?;
    train(model, train_set, val_set, config, |entry, m, improved| {
        writeln!(log, "{}", entry.csv_row())?;
        log.flush()?;
        if improved {
            save_checkpoint(m, checkpoint_path)?;
        }
        progress(entry);
        Ok(())
    })
}
