//! Dataset ingestion, synthetic generators, and the experimental protocol:
//! missingness injection, stratified 70/15/15 splitting, and train-statistic
//! normalization. Every operation is pure (sources are never mutated) and
//! every random choice flows through an explicit seed.

mod csv_io;
mod protocol;
mod synthetic;

pub use csv_io::{load_csv_dataset, save_csv_dataset};
pub use protocol::{inject_missingness, normalize_channels, split_dataset, ChannelStats};
pub use synthetic::{generate_synthetic, SyntheticKind};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::path::ObservationGrid;

/// One irregular multivariate series with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSample {
    pub times: Vec<f64>,
    /// Row-major `n × d_x`.
    pub values: Vec<f64>,
    /// Same layout; `true` = observed.
    pub observed: Vec<bool>,
    pub label: usize,
}

impl TimeSeriesSample {
    pub fn num_obs(&self) -> usize {
        self.times.len()
    }

    pub fn to_grid(&self, d_x: usize) -> Result<ObservationGrid> {
        ObservationGrid::new(
            self.times.clone(),
            self.values.clone(),
            self.observed.clone(),
            d_x,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub d_x: usize,
    pub samples: Vec<TimeSeriesSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Preprocessed grids (completed, rescaled, time channel appended) for
    /// every sample, paired with labels.
    pub fn preprocessed(&self) -> Result<Vec<(ObservationGrid, usize)>> {
        self.samples
            .iter()
            .map(|s| Ok((s.to_grid(self.d_x)?.preprocess()?, s.label)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// JSON envelope

#[derive(Serialize, Deserialize)]
struct SampleEnvelope {
    label: usize,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
}

/// Serialization schema `{name, K, d_x, samples: [{label, times, values,
/// mask}]}`; `mask[i][j] = true` means channel `j` at time `i` was observed.
#[derive(Serialize, Deserialize)]
struct DatasetEnvelope {
    name: String,
    #[serde(rename = "K")]
    num_classes: usize,
    d_x: usize,
    samples: Vec<SampleEnvelope>,
}

impl Serialize for Dataset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let envelope = DatasetEnvelope {
            name: self.name.clone(),
            num_classes: self.num_classes,
            d_x: self.d_x,
            samples: self
                .samples
                .iter()
                .map(|s| SampleEnvelope {
                    label: s.label,
                    times: s.times.clone(),
                    values: s
                        .times
                        .iter()
                        .enumerate()
                        .map(|(i, _)| s.values[i * self.d_x..(i + 1) * self.d_x].to_vec())
                        .collect(),
                    mask: s
                        .times
                        .iter()
                        .enumerate()
                        .map(|(i, _)| s.observed[i * self.d_x..(i + 1) * self.d_x].to_vec())
                        .collect(),
                })
                .collect(),
        };
        envelope.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let envelope = DatasetEnvelope::deserialize(deserializer)?;
        Ok(Dataset {
            name: envelope.name,
            num_classes: envelope.num_classes,
            d_x: envelope.d_x,
            samples: envelope
                .samples
                .into_iter()
                .map(|s| TimeSeriesSample {
                    label: s.label,
                    times: s.times,
                    values: s.values.into_iter().flatten().collect(),
                    observed: s.mask.into_iter().flatten().collect(),
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests;
