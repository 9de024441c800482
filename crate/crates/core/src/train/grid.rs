use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cde::CdeModel;
use crate::data::Dataset;

use super::trainer::{train_model, TrainConfig, TrainHistory};

/// Architecture grid plus the number of log-uniform learning-rate draws per
/// cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_layers: Vec<usize>,
    pub hidden: Vec<usize>,
    pub lr_draws: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_layers: vec![1, 2, 3, 4],
            hidden: vec![16, 32, 64, 128],
            lr_draws: 3,
        }
    }
}

const LR_LOG_MIN: f64 = -4.0; // 1e-4
const LR_LOG_MAX: f64 = -1.0; // 1e-1

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCellOutcome {
    pub n_layers: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub val_loss: f64,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct GridSearchResult {
    /// Cells sorted ascending by validation loss (failures last).
    pub ranked: Vec<GridCellOutcome>,
    pub best_model: Option<(CdeModel, TrainHistory)>,
}

impl GridSearchResult {
    pub fn best(&self) -> Option<&GridCellOutcome> {
        self.ranked.first().filter(|c| c.error.is_none())
    }
}

/// Trains one model per `(n_layers, hidden)` cell, sampling `lr_draws`
/// learning rates log-uniformly in `[1e-4, 1e-1]` per cell and keeping the
/// best draw; ranks all cells by validation loss. Individual cell failures
/// are recorded and the search continues.
///
/// Hyperparameters are selected once (on the unmasked data in the
/// experiment drivers) and reused unchanged for missing-rate variants.
pub fn grid_search<F>(
    train: &Dataset,
    val: &Dataset,
    grid: &GridSpec,
    cfg_template: &TrainConfig,
    mut builder: F,
) -> GridSearchResult
where
    F: FnMut(usize, usize, u64) -> CdeModel,
{
    assert!(grid.lr_draws >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg_template.seed.wrapping_mul(0x9e37_79b9));
    let mut ranked = Vec::new();
    let mut best_model: Option<(CdeModel, TrainHistory)> = None;
    let mut best_loss = f64::INFINITY;

    for (cell, (&n_layers, &hidden)) in grid
        .n_layers
        .iter()
        .flat_map(|n| grid.hidden.iter().map(move |h| (n, h)))
        .enumerate()
    {
        let mut cell_best: Option<GridCellOutcome> = None;
        for draw in 0..grid.lr_draws {
            let lr = 10f64.powf(rng.gen_range(LR_LOG_MIN..LR_LOG_MAX));
            let mut cfg = cfg_template.clone();
            cfg.learning_rate = lr;
            let model = builder(n_layers, hidden, cfg.seed.wrapping_add(cell as u64));
            let outcome = match train_model(&model, train, val, &cfg) {
                Ok((trained, history)) => {
                    let val_loss = history.best_val_loss();
                    if val_loss < best_loss {
                        best_loss = val_loss;
                        best_model = Some((trained, history));
                    }
                    GridCellOutcome {
                        n_layers,
                        hidden,
                        learning_rate: lr,
                        val_loss,
                        error: None,
                    }
                }
                Err(e) => GridCellOutcome {
                    n_layers,
                    hidden,
                    learning_rate: lr,
                    val_loss: f64::INFINITY,
                    error: Some(e.to_string()),
                },
            };
            let better = match &cell_best {
                None => true,
                Some(b) => outcome.val_loss < b.val_loss,
            };
            if better || draw == 0 {
                cell_best = Some(outcome);
            }
        }
        ranked.push(cell_best.expect("at least one draw per cell"));
    }

    ranked.sort_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap_or(std::cmp::Ordering::Equal));
    GridSearchResult { ranked, best_model }
}
