//! AdaDelta optimization with early stopping on dev macro-F1.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::L2Penalty;
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::evaluation::macro_f1;
use crate::model::Model;
use crate::numerics::{Gradients, ParamStore, Rng};
use crate::scalar::Scalar;

/// Per-parameter AdaDelta accumulators.
///
/// ```text
/// E[g²]  ← ρ E[g²] + (1−ρ) g²
/// Δx     = −√(E[Δx²] + ε) / √(E[g²] + ε) · g
/// E[Δx²] ← ρ E[Δx²] + (1−ρ) Δx²
/// θ      ← θ + η Δx
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDelta<T> {
    pub rho: T,
    pub eps: T,
    pub lr: T,
    sq_grad: Vec<Vec<T>>,
    sq_update: Vec<Vec<T>>,
}

impl<T: Scalar> AdaDelta<T> {
    pub fn new(store: &ParamStore<T>, rho: f64, eps: f64, lr: f64) -> Self {
        let zeros: Vec<Vec<T>> = store
            .iter()
            .map(|(_, p)| vec![T::zero(); p.value.len()])
            .collect();
        Self {
            rho: T::from_f64_lossy(rho),
            eps: T::from_f64_lossy(eps),
            lr: T::from_f64_lossy(lr),
            sq_grad: zeros.clone(),
            sq_update: zeros,
        }
    }

    /// E[g²] for parameter `index`.
    pub fn sq_grad(&self, index: usize) -> &[T] {
        &self.sq_grad[index]
    }

    pub fn sq_update(&self, index: usize) -> &[T] {
        &self.sq_update[index]
    }

    /// Applies one update. Non-trainable parameters and frozen rows are left
    /// untouched. Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        let ids: Vec<_> = store.ids().filter(|&id| store.get(id).trainable).collect();
        let mut dense = Vec::with_capacity(ids.len());
        for &id in &ids {
            let g = grads.dense(id);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(store.get(id).name.clone()));
            }
            dense.push(g);
        }
        let one = T::one();
        for (&id, g) in ids.iter().zip(dense) {
            let p = store.get_mut(id);
            let cols = p.value.cols();
            let frozen = |i: usize| p.frozen_rows.contains(&(i / cols.max(1)));
            let frozen: Vec<bool> = (0..g.len()).map(frozen).collect();
            let (eg, ex) = (&mut self.sq_grad[id.index()], &mut self.sq_update[id.index()]);
            let values = p.value.data_mut();
            for i in 0..g.len() {
                if frozen[i] {
                    continue;
                }
                eg[i] = self.rho * eg[i] + (one - self.rho) * g[i] * g[i];
                let dx = -((ex[i] + self.eps).sqrt() / (eg[i] + self.eps).sqrt()) * g[i];
                ex[i] = self.rho * ex[i] + (one - self.rho) * dx * dx;
                values[i] += self.lr * dx;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Summed cross-entropy over the batch (before any averaging).
    pub loss: f64,
    pub correct: usize,
    pub examples: usize,
}

/// Owns a model and its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub optimizer: AdaDelta<T>,
    seed: u64,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, seed: u64) -> Self {
        let c = &model.config;
        let optimizer = AdaDelta::new(&model.store, c.rho, c.eps, c.learning_rate);
        Self {
            model,
            optimizer,
            seed,
            epoch: 0,
        }
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Summed batch gradient including the L2 term, computed per example in
    /// parallel and merged in batch order. Dropout draws come from stream
    /// `stream_base + k` for the k-th example.
    pub fn batch_gradients(&self, batch: &[&Example], stream_base: u64) -> Result<(Gradients<T>, StepStats)> {
        let cfg = &self.model.config;
        let dropout = cfg.dropout_word > 0.0 || cfg.dropout_lstm > 0.0 || cfg.dropout_attention > 0.0;
        let root = Rng::new(self.seed);
        let per_example: Vec<_> = batch
            .par_iter()
            .enumerate()
            .map(|(k, ex)| {
                let mut rng = root.fork(stream_base + k as u64);
                self.model
                    .example_gradients(ex, if dropout { Some(&mut rng) } else { None })
            })
            .collect::<Result<_>>()?;
        let mut grads = Gradients::for_store(&self.model.store);
        let mut stats = StepStats {
            loss: 0.0,
            correct: 0,
            examples: batch.len(),
        };
        for eg in &per_example {
            grads.accumulate(&eg.grads);
            stats.loss += eg.loss.as_f64();
            stats.correct += usize::from(eg.correct);
        }
        if cfg.mean_loss && !batch.is_empty() {
            grads.scale(T::one() / T::from_f64_lossy(batch.len() as f64));
        }
        L2Penalty::from_config(cfg).add_gradient(&self.model.store, &mut grads);
        if let Some(c) = cfg.clip_norm {
            let norm = grads.squared_norm().as_f64().sqrt();
            if norm > c {
                grads.scale(T::from_f64_lossy(c / norm));
            }
        }
        Ok((grads, stats))
    }

    pub fn step(&mut self, batch: &[&Example], stream_base: u64) -> Result<StepStats> {
        let (grads, stats) = self.batch_gradients(batch, stream_base)?;
        self.optimizer.step(&mut self.model.store, &grads)?;
        Ok(stats)
    }

    /// One shuffled pass over `train`.
    pub fn run_epoch(&mut self, train: &[Example]) -> Result<StepStats> {
        let root = Rng::new(self.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        root.fork(self.epoch as u64).shuffle(&mut order);
        let mut total = StepStats {
            loss: 0.0,
            correct: 0,
            examples: 0,
        };
        let base = (self.epoch as u64 + 1) << 32;
        for (b, chunk) in order.chunks(self.model.config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let s = self.step(&batch, base + (b * self.model.config.batch_size) as u64)?;
            total.loss += s.loss;
            total.correct += s.correct;
            total.examples += s.examples;
        }
        self.epoch += 1;
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy per training example during the pass.
    pub train_loss: f64,
    /// Accuracy of the (dropout-perturbed) training forward passes.
    pub train_accuracy: f64,
    pub dev_macro_f1: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the highest dev macro-F1 (earliest on ties).
    pub best_epoch: Option<usize>,
    pub best_dev_macro_f1: Option<f64>,
    /// Whether selection used the training set because no dev set was given.
    pub selected_on_train: bool,
}

impl TrainReport {
    /// The report with wall-clock times zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.wall_secs = 0.0);
        r
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Trains up to `max_epochs`, scoring `dev` after every epoch (the training
/// set when `dev` is empty). Returns the model restored to its best epoch.
pub fn train<T: Scalar>(
    model: Model<T>,
    train: &[Example],
    dev: &[Example],
    seed: u64,
) -> Result<(Model<T>, TrainReport)> {
    train_with(model, train, dev, seed, |_| {})
}

/// As [`train`], calling `on_epoch` after each epoch is scored.
pub fn train_with<T: Scalar>(
    model: Model<T>,
    train: &[Example],
    dev: &[Example],
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model<T>, TrainReport)> {
    let cfg = model.config.clone();
    let mut trainer = Trainer::new(model, seed);
    let selected_on_train = dev.is_empty();
    let scored = if selected_on_train { train } else { dev };
    let gold: Vec<usize> = scored.iter().map(|e| e.label).collect();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: None,
        best_dev_macro_f1: None,
        selected_on_train,
    };
    let mut best_store = trainer.model.store.clone();
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let stats = trainer.run_epoch(train)?;
        let pred = trainer.model.predict(scored)?;
        let f1 = macro_f1(&gold, &pred)?.macro_f1;
        let n = stats.examples.max(1) as f64;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: stats.loss / n,
            train_accuracy: stats.correct as f64 / n,
            dev_macro_f1: f1,
            wall_secs: start.elapsed().as_secs_f64(),
        });
        on_epoch(report.epochs.last().expect("just pushed"));
        if report.best_dev_macro_f1.is_none_or(|b| f1 > b) {
            report.best_dev_macro_f1 = Some(f1);
            report.best_epoch = Some(epoch);
            best_store = trainer.model.store.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let mut model = trainer.model;
    model.store = best_store;
    Ok((model, report))
}
