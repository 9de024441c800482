use serde::{Deserialize, Serialize};

use super::grid::ObservationGrid;
use crate::error::{Error, Result};

/// Knot bookkeeping shared by the interpolating paths: multivariate values
/// on a strictly increasing time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Knots {
    pub times: Vec<f64>,
    /// Row-major `n × channels`.
    pub values: Vec<f64>,
    pub channels: usize,
}

impl Knots {
    pub fn from_grid(grid: &ObservationGrid) -> Self {
        debug_assert!(grid.is_complete(), "paths are built on completed grids");
        Self {
            times: grid.times().to_vec(),
            values: grid.values().to_vec(),
            channels: grid.channels(),
        }
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn value(&self, i: usize, ch: usize) -> f64 {
        self.values[i * self.channels + ch]
    }

    /// Index of the segment `[t_i, t_{i+1}]` whose right-open interval
    /// contains `t`; the final knot belongs to the last segment.
    pub fn segment(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&k| k <= t);
        i.saturating_sub(1).min(self.n() - 2)
    }

    /// Anchor index: the latest knot time ≤ t.
    pub fn anchor(&self, t: f64) -> usize {
        self.times.partition_point(|&k| k <= t).saturating_sub(1)
    }
}

/// Piecewise-linear interpolant; derivative is the right-segment slope at
/// knots (left slope at the horizon).
#[derive(Debug, Clone)]
pub struct LinearPath {
    pub(crate) knots: Knots,
}

impl LinearPath {
    pub fn new(grid: &ObservationGrid) -> Self {
        Self {
            knots: Knots::from_grid(grid),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let i = self.knots.segment(t);
        let (t0, t1) = (self.knots.times[i], self.knots.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        (0..self.knots.channels)
            .map(|ch| self.knots.value(i, ch) * (1.0 - w) + self.knots.value(i + 1, ch) * w)
            .collect()
    }

    pub fn deriv(&self, t: f64) -> Vec<f64> {
        let i = self.knots.segment(t);
        let h = self.knots.times[i + 1] - self.knots.times[i];
        (0..self.knots.channels)
            .map(|ch| (self.knots.value(i + 1, ch) - self.knots.value(i, ch)) / h)
            .collect()
    }
}

/// Natural cubic spline (zero second derivative at both ends), one
/// tridiagonal solve per channel. Falls back to linear below 3 knots.
#[derive(Debug, Clone)]
pub struct SplinePath {
    knots: Knots,
    /// Second derivatives `M` at each knot, row-major `n × channels`.
    m: Vec<f64>,
}

impl SplinePath {
    pub fn new(grid: &ObservationGrid) -> Result<Self> {
        let knots = Knots::from_grid(grid);
        for w in knots.times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(format!(
                    "duplicate or decreasing timestamps in spline knots ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let n = knots.n();
        let mut m = vec![0.0; n * knots.channels];
        if n >= 3 {
            let times = knots.times.clone();
            for ch in 0..knots.channels {
                let y: Vec<f64> = (0..n).map(|i| knots.value(i, ch)).collect();
                let m_ch = natural_spline_second_derivatives(&times, &y);
                for i in 0..n {
                    m[i * knots.channels + ch] = m_ch[i];
                }
            }
        }
        Ok(Self { knots, m })
    }

    fn m_at(&self, i: usize, ch: usize) -> f64 {
        self.m[i * self.knots.channels + ch]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let i = self.knots.segment(t);
        let (t0, t1) = (self.knots.times[i], self.knots.times[i + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        (0..self.knots.channels)
            .map(|ch| {
                a * self.knots.value(i, ch)
                    + b * self.knots.value(i + 1, ch)
                    + ((a * a * a - a) * self.m_at(i, ch) + (b * b * b - b) * self.m_at(i + 1, ch))
                        * h
                        * h
                        / 6.0
            })
            .collect()
    }

    pub fn deriv(&self, t: f64) -> Vec<f64> {
        let i = self.knots.segment(t);
        let (t0, t1) = (self.knots.times[i], self.knots.times[i + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        (0..self.knots.channels)
            .map(|ch| {
                (self.knots.value(i + 1, ch) - self.knots.value(i, ch)) / h
                    - (3.0 * a * a - 1.0) / 6.0 * h * self.m_at(i, ch)
                    + (3.0 * b * b - 1.0) / 6.0 * h * self.m_at(i + 1, ch)
            })
            .collect()
    }

    pub fn second_deriv(&self, t: f64) -> Vec<f64> {
        let i = self.knots.segment(t);
        let (t0, t1) = (self.knots.times[i], self.knots.times[i + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        (0..self.knots.channels)
            .map(|ch| a * self.m_at(i, ch) + b * self.m_at(i + 1, ch))
            .collect()
    }

    pub fn knots(&self) -> &Knots {
        &self.knots
    }
}

/// Second derivatives of the natural cubic spline through `(t_i, y_i)`,
/// via the Thomas algorithm on the standard tridiagonal system.
fn natural_spline_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    debug_assert!(n >= 3);
    let interior = n - 2;
    // Tridiagonal system for M_1..M_{n-2}; M_0 = M_{n-1} = 0.
    let mut sub = vec![0.0; interior];
    let mut diag = vec![0.0; interior];
    let mut sup = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    for k in 0..interior {
        let i = k + 1;
        let h_prev = t[i] - t[i - 1];
        let h_next = t[i + 1] - t[i];
        sub[k] = h_prev / 6.0;
        diag[k] = (h_prev + h_next) / 3.0;
        sup[k] = h_next / 6.0;
        rhs[k] = (y[i + 1] - y[i]) / h_next - (y[i] - y[i - 1]) / h_prev;
    }
    // Thomas forward sweep.
    for k in 1..interior {
        let w = sub[k] / diag[k - 1];
        diag[k] -= w * sup[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    // Back substitution.
    let mut m = vec![0.0; n];
    if interior > 0 {
        m[interior] = rhs[interior - 1] / diag[interior - 1];
        for k in (0..interior - 1).rev() {
            m[k + 1] = (rhs[k] - sup[k] * m[k + 2]) / diag[k];
        }
    }
    m
}
