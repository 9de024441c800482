//! Optimization loop, early stopping, hyperparameter grid search, and
//! classification metrics.

mod adam;
mod grid;
mod metrics;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use grid::{grid_search, GridCellOutcome, GridSearchResult, GridSpec};
pub use metrics::{evaluate, MetricsReport};
pub use trainer::{
    train_model, EarlyStopper, EpochRecord, GradientEngine, Optimizer, TrainConfig, TrainHistory,
};

#[cfg(test)]
mod tests;
