use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use super::Adam;
use crate::error::{invalid, Error, Result};
use crate::seed;

/// A differentiable loss over an indexed sample set.
pub trait Objective {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn param_count(&self) -> usize;

    /// Mean loss over `batch`; the mean gradient is added into `grad`.
    fn batch_loss_grad(&self, params: &[f64], batch: &[usize], grad: &mut [f64]) -> f64;

    /// Mean loss over the whole set.
    fn loss(&self, params: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 100,
            epochs: 30,
            max_steps: None,
            patience: Some(5),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub step: usize,
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub loss: f64,
    /// Validation loss, or full training loss when no validation set is given.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters at the best validation loss.
    pub params: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Shuffled minibatch Adam with best-validation checkpointing.
pub fn train(
    objective: &dyn Objective,
    validation: Option<&dyn Objective>,
    init: Vec<f64>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if objective.is_empty() {
        return Err(invalid("empty training set"));
    }
    if init.len() != objective.param_count() {
        return Err(invalid("initial parameters do not match the model"));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate >= 0.0) {
        return Err(invalid(
            "batch size must be positive and learning rate non-negative",
        ));
    }
    let validation = validation.filter(|v| !v.is_empty());
    let val_loss = |p: &[f64]| validation.map_or_else(|| objective.loss(p), |v| v.loss(p));

    let mut rng = seed::rng(seed::derive(cfg.seed, "shuffle", 0));
    let mut params = init;
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..objective.len()).collect();

    let mut best = params.clone();
    let mut best_val = val_loss(&params);
    if !best_val.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            epoch: 0,
            loss: best_val,
        });
    }
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    let mut steps = 0;
    let mut stale = 0;
    let mut stopped_early = false;

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            grad.fill(0.0);
            let loss = objective.batch_loss_grad(&params, batch, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    step: steps,
                    epoch,
                    loss,
                });
            }
            adam.step(&mut params, &grad);
            steps += 1;
            sum += loss;
            batches += 1;
        }
        if batches == 0 {
            break;
        }
        let val = val_loss(&params);
        if !val.is_finite() {
            return Err(Error::Divergence {
                step: steps,
                epoch,
                loss: val,
            });
        }
        curve.push(CurvePoint {
            step: steps,
            epoch,
            loss: sum / batches as f64,
            val_loss: val,
        });
        if val < best_val {
            best_val = val;
            best.clone_from(&params);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }

    Ok(TrainOutcome {
        params: best,
        curve,
        best_epoch,
        best_val_loss: best_val,
        steps,
        stopped_early,
    })
}
