//! Small dense linear-algebra helpers.
//!
//! Everything here operates on row-major `&[f64]` buffers and is sized for
//! the dimensions this crate actually uses (flow and latent dimensions of a
//! few up to a few dozen), so an in-place partially pivoted LU is the whole
//! story.

use crate::error::{Error, Result};

/// `log |det A|` for a square row-major matrix, via LU with partial pivoting.
///
/// Returns [`Error::DegenerateJacobian`] when the determinant magnitude
/// underflows 1e-300.
pub fn log_abs_det(a: &[f64], n: usize) -> Result<f64> {
    assert_eq!(a.len(), n * n, "log_abs_det: buffer/dimension mismatch");
    let mut m = a.to_vec();
    let mut log_det = 0.0f64;
    for col in 0..n {
        // pivot search
        let mut pivot_row = col;
        let mut pivot_val = m[col * n + col].abs();
        for row in (col + 1)..n {
            let v = m[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < 1e-300 {
            return Err(Error::DegenerateJacobian { det: 0.0 });
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
        }
        let pivot = m[col * n + col];
        log_det += pivot.abs().ln();
        for row in (col + 1)..n {
            let factor = m[row * n + col] / pivot;
            m[row * n + col] = factor;
            for k in (col + 1)..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
        }
    }
    if !log_det.is_finite() {
        return Err(Error::DegenerateJacobian { det: 0.0 });
    }
    Ok(log_det)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
