use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Irregular multivariate observations on a strictly increasing time grid,
/// with a per-entry observation mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationGrid {
    times: Vec<f64>,
    /// Row-major `num_obs × channels`.
    values: Vec<f64>,
    /// Same layout; `true` means the entry was observed.
    observed: Vec<bool>,
    channels: usize,
}

impl ObservationGrid {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        observed: Vec<bool>,
        channels: usize,
    ) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observation times, got {}",
                times.len()
            )));
        }
        if values.len() != times.len() * channels || observed.len() != values.len() {
            return Err(Error::InvalidInput(
                "value/mask buffers do not match times × channels".into(),
            ));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput(format!(
                    "times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let grid = Self {
            times,
            values,
            observed,
            channels,
        };
        for ch in 0..channels {
            if (0..grid.num_obs()).all(|i| !grid.is_observed(i, ch)) {
                return Err(Error::UnusableChannel { channel: ch });
            }
        }
        Ok(grid)
    }

    /// Fully observed grid.
    pub fn complete(times: Vec<f64>, values: Vec<f64>, channels: usize) -> Result<Self> {
        let observed = vec![true; values.len()];
        Self::new(times, values, observed, channels)
    }

    pub fn num_obs(&self) -> usize {
        self.times.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, obs: usize, ch: usize) -> f64 {
        self.values[obs * self.channels + ch]
    }

    pub fn is_observed(&self, obs: usize, ch: usize) -> bool {
        self.observed[obs * self.channels + ch]
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn row(&self, obs: usize) -> &[f64] {
        &self.values[obs * self.channels..(obs + 1) * self.channels]
    }

    /// Protocol preprocessing applied before any path construction:
    ///
    /// 1. timestamps rescaled to `[0, 1]`,
    /// 2. missing entries filled per channel by linear interpolation between
    ///    that channel's own observed values (constant extrapolation before
    ///    the first and after the last observation),
    /// 3. a time channel equal to the rescaled timestamp appended.
    pub fn preprocess(&self) -> Result<ObservationGrid> {
        let n = self.num_obs();
        let t0 = self.times[0];
        let span = self.times[n - 1] - t0;
        let times: Vec<f64> = self.times.iter().map(|t| (t - t0) / span).collect();

        let out_channels = self.channels + 1;
        let mut values = vec![0.0; n * out_channels];
        for ch in 0..self.channels {
            let obs_idx: Vec<usize> = (0..n).filter(|&i| self.is_observed(i, ch)).collect();
            debug_assert!(!obs_idx.is_empty());
            for i in 0..n {
                let filled = if self.is_observed(i, ch) {
                    self.value(i, ch)
                } else {
                    fill_from_neighbors(self, ch, &obs_idx, i)
                };
                values[i * out_channels + ch] = filled;
            }
        }
        for i in 0..n {
            values[i * out_channels + self.channels] = times[i];
        }
        ObservationGrid::complete(times, values, out_channels)
    }
}

/// Linear interpolation between the channel's surrounding observed entries;
/// constant beyond the first/last observed one.
fn fill_from_neighbors(grid: &ObservationGrid, ch: usize, obs_idx: &[usize], i: usize) -> f64 {
    let after = obs_idx.partition_point(|&j| j < i);
    if after == 0 {
        return grid.value(obs_idx[0], ch);
    }
    if after == obs_idx.len() {
        return grid.value(obs_idx[obs_idx.len() - 1], ch);
    }
    let (lo, hi) = (obs_idx[after - 1], obs_idx[after]);
    let (t_lo, t_hi) = (grid.times[lo], grid.times[hi]);
    let w = (grid.times[i] - t_lo) / (t_hi - t_lo);
    grid.value(lo, ch) * (1.0 - w) + grid.value(hi, ch) * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1ch(times: Vec<f64>, values: Vec<f64>, observed: Vec<bool>) -> ObservationGrid {
        ObservationGrid::new(times, values, observed, 1).unwrap()
    }

    #[test]
    fn midpoint_fill() {
        let g = grid_1ch(
            vec![0.0, 0.5, 1.0],
            vec![0.0, 999.0, 2.0],
            vec![true, false, true],
        );
        let p = g.preprocess().unwrap();
        assert_eq!(p.channels(), 2);
        assert!((p.value(1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fully_observed_values_unchanged_and_time_channel_appended() {
        let g = grid_1ch(vec![0.0, 2.0, 4.0], vec![5.0, 6.0, 7.0], vec![true; 3]);
        let p = g.preprocess().unwrap();
        assert_eq!(p.times(), &[0.0, 0.5, 1.0]);
        for (i, v) in [5.0, 6.0, 7.0].iter().enumerate() {
            assert_eq!(p.value(i, 0), *v);
            assert_eq!(p.value(i, 1), p.times()[i]);
        }
        assert!(p.is_complete());
    }

    #[test]
    fn missing_before_first_uses_constant_extrapolation() {
        // Channel observed only from t=0.4 on; earlier entries take that
        // first observed value.
        let g = ObservationGrid::new(
            vec![0.0, 0.1, 0.4, 1.0],
            vec![
                1.0, 0.0, // t=0.0: ch0 observed, ch1 missing
                1.5, 0.0, // t=0.1: ch0 observed, ch1 missing
                2.0, 3.0, // t=0.4: both observed
                2.5, 4.0, // t=1.0: both observed
            ],
            vec![true, false, true, false, true, true, true, true],
            2,
        )
        .unwrap();
        let p = g.preprocess().unwrap();
        assert_eq!(p.value(0, 1), 3.0);
        assert_eq!(p.value(1, 1), 3.0);
    }

    #[test]
    fn channel_without_observations_rejected() {
        let err = ObservationGrid::new(
            vec![0.0, 1.0],
            vec![1.0, 0.0, 2.0, 0.0],
            vec![true, false, true, false],
            2,
        )
        .unwrap_err();
        match err {
            Error::UnusableChannel { channel } => assert_eq!(channel, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_monotone_times_rejected() {
        assert!(ObservationGrid::new(
            vec![0.0, 0.5, 0.5],
            vec![1.0, 2.0, 3.0],
            vec![true; 3],
            1
        )
        .is_err());
    }
}
