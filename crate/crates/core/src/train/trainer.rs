use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cde::{adjoint_backward, CdeModel, GradientBundle};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{pack, unpack, Params};
use crate::path::ObservationGrid;

use super::adam::{adam_step, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientEngine {
    /// Exact reverse sweep of the Euler discretization (default).
    Discrete,
    /// Continuous adjoint integrated on the same grid.
    Adjoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub gradient_engine: GradientEngine,
    pub solver_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_epochs: 100,
            patience: 10,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::Adam,
            gradient_engine: GradientEngine::Discrete,
            solver_steps: 64,
        }
    }
}

/// Strict-improvement early stopping: stop once the validation loss has not
/// improved for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    since_improve: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_improve: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_improve = 0;
            (true, false)
        } else {
            self.since_improve += 1;
            (false, self.since_improve >= self.patience)
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch].val_loss
    }

    pub fn loss_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

fn mean_loss_and_accuracy(model: &CdeModel, grids: &[(ObservationGrid, usize)]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (grid, label) in grids {
        let (logits, _) = model.forward_classify(grid)?;
        loss += crate::cde::cross_entropy_loss(logits.data(), *label);
        let pred = argmax(logits.data());
        if pred == *label {
            correct += 1;
        }
    }
    Ok((
        loss / grids.len() as f64,
        correct as f64 / grids.len() as f64,
    ))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch training with per-epoch validation; returns the parameters of
/// the best validation epoch together with the full history.
///
/// Spectrally capped layers are re-projected (one power iteration) after
/// every optimizer step, so the Lipschitz certificates hold throughout
/// training while both gradient engines differentiate a plain network.
pub fn train_model(
    model: &CdeModel,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(CdeModel, TrainHistory)> {
    assert!(!train.is_empty() && !val.is_empty());
    let train_grids = train.preprocessed()?;
    let val_grids = val.preprocessed()?;

    let mut m = model.clone();
    m.solver_steps = cfg.solver_steps;
    let mut adam = AdamState::new(m.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_model = m.clone();
    let mut indices: Vec<usize> = (0..train_grids.len()).collect();

    for epoch in 0..cfg.max_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(cfg.batch_size.max(1)) {
            let mut bundle = GradientBundle::zeros_for(&m);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (grid, label) = &train_grids[i];
                let (loss, grads) = match cfg.gradient_engine {
                    GradientEngine::Discrete => m.discrete_backprop(grid, *label)?,
                    GradientEngine::Adjoint => adjoint_backward(&m, grid, *label, cfg.solver_steps)?,
                };
                batch_loss += loss;
                bundle.add(&grads);
            }
            bundle.scale(1.0 / batch.len() as f64);
            epoch_loss += batch_loss;

            let mut theta = pack(&m);
            let flat = bundle.flatten();
            match cfg.optimizer {
                Optimizer::Adam => adam_step(&mut theta, &flat, &mut adam, cfg.learning_rate),
                Optimizer::Sgd => {
                    crate::linalg::axpy(-cfg.learning_rate, flat.as_slice(), theta.as_mut_slice())
                }
            }
            unpack(&mut m, &theta);
            if cfg.learning_rate != 0.0 {
                m.spectral_normalize_all(1);
            }
        }
        epoch_loss /= train_grids.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }

        let (val_loss, val_accuracy) = mean_loss_and_accuracy(&m, &val_grids)?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss,
            val_loss,
            val_accuracy,
        });
        let (improved, stop) = stopper.observe(val_loss);
        if improved {
            best_model = m.clone();
            history.best_epoch = epoch;
        }
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    Ok((best_model, history))
}
