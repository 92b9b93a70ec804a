//! SGD-with-momentum training loop with step decay and early stopping.

use super::{mse, NeuralNet, Tensor};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Learning rate multiplier applied every `lr_decay_every_epochs`.
    pub lr_decay_factor: f64,
    pub lr_decay_every_epochs: usize,
    /// Stop when validation loss fails to improve this many consecutive
    /// epochs; 0 disables early stopping.
    pub early_stop_patience_epochs: usize,
    pub max_epochs: usize,
    /// Fraction of the dataset held out for validation.
    pub validation_fraction: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            momentum: 0.9,
            batch_size: 128,
            lr_decay_factor: 0.9,
            lr_decay_every_epochs: 30,
            early_stop_patience_epochs: 3,
            max_epochs: 100,
            validation_fraction: 0.2,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr < 0.0 {
            return Err(Error::invalid("learning rate must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch_size and max_epochs must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Trains the network in place. Batches are reshuffled every epoch from the
/// seed; the whole run is bit-reproducible and frozen layers never change.
pub fn train(
    net: &mut NeuralNet,
    features: &[Tensor],
    labels: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "need matching non-empty features/labels, got {}/{}",
            features.len(),
            labels.len()
        )));
    }

    // Deterministic 80/20-style split: shuffle once, then cut.
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut split_rng = rng_from_seed(derive_seed(cfg.rng_seed, &[0xdead]));
    order.shuffle(&mut split_rng);
    let n_val = ((features.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_train = features.len() - n_val;
    let (train_idx, val_idx) = order.split_at(n_train);
    let mut train_idx = train_idx.to_vec();

    let mut velocity = vec![0.0; net.param_count()];
    let mut lr = cfg.lr;
    let mut train_loss_hist = Vec::new();
    let mut val_loss_hist = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut bad_epochs = 0usize;
    let mut stopped_early = false;
    let mut epoch_rng = rng_from_seed(derive_seed(cfg.rng_seed, &[0xbeef]));

    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        if epoch > 0 && cfg.lr_decay_every_epochs > 0 && epoch % cfg.lr_decay_every_epochs == 0 {
            lr *= cfg.lr_decay_factor;
        }
        train_idx.shuffle(&mut epoch_rng);

        let mut epoch_loss = 0.0;
        let mut grad = vec![0.0; net.param_count()];
        for (batch_no, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for (k, &i) in batch.iter().enumerate() {
                let mask_seed = derive_seed(cfg.rng_seed, &[epoch as u64, batch_no as u64, k as u64]);
                let trace = net.forward_trace(&features[i], true, mask_seed)?;
                let (g, loss) = net.backward_from_trace(&trace, &labels[i])?;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += gi;
                }
                batch_loss += loss;
            }
            let inv = 1.0 / batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            // v <- mu v - lr g ; theta <- theta + v
            for ((v, g), p) in velocity.iter_mut().zip(&grad).zip(net.params.iter_mut()) {
                *v = cfg.momentum * *v - lr * g * inv;
                *p += *v;
            }
        }
        epoch_loss /= n_train.max(1) as f64;
        train_loss_hist.push(epoch_loss);

        let v_loss = if val_idx.is_empty() {
            epoch_loss
        } else {
            let mut acc = 0.0;
            for &i in val_idx {
                let out = net.predict(&features[i])?;
                acc += mse(&out, &labels[i])?;
            }
            acc / val_idx.len() as f64
        };
        if !v_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: v_loss,
            });
        }
        val_loss_hist.push(v_loss);

        if v_loss < best_val - 1e-15 {
            best_val = v_loss;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if cfg.early_stop_patience_epochs > 0 && bad_epochs >= cfg.early_stop_patience_epochs {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainReport {
        train_loss: train_loss_hist,
        val_loss: val_loss_hist,
        epochs_run,
        stopped_early,
    })
}
