use super::params::ParamVector;
use crate::error::{Error, Result};

/// Central finite-difference gradient of a scalar function: the ground-truth
/// oracle every analytic gradient in this crate is checked against.
///
/// One coordinate at a time, `(f(θ+εeᵢ) − f(θ−εeᵢ)) / 2ε`.
pub fn finite_difference_grad<F>(
    mut scalar_fn: F,
    point: &ParamVector,
    step: f64,
) -> Result<ParamVector>
where
    F: FnMut(&ParamVector) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = point.clone();
    let mut grad = ParamVector::zeros(point.len());
    for i in 0..point.len() {
        let orig = probe.0[i];
        probe.0[i] = orig + step;
        let plus = scalar_fn(&probe);
        probe.0[i] = orig - step;
        let minus = scalar_fn(&probe);
        probe.0[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::OracleFailure { coord: i });
        }
        grad.0[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |p: &ParamVector| p.as_slice().iter().map(|x| x * x).sum::<f64>();
        let grad = finite_difference_grad(f, &ParamVector(vec![1.0, 2.0]), 1e-6).unwrap();
        assert!((grad.0[0] - 2.0).abs() < 1e-8);
        assert!((grad.0[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_zero_gradient() {
        let grad =
            finite_difference_grad(|_| 3.5, &ParamVector(vec![0.3, -0.7, 2.0]), 1e-6).unwrap();
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_value_is_oracle_failure() {
        // ln goes NaN at the negative probe point.
        let f = |p: &ParamVector| p.0[0].ln();
        let err = finite_difference_grad(f, &ParamVector(vec![1e-7]), 1e-6).unwrap_err();
        match err {
            Error::OracleFailure { coord } => assert_eq!(coord, 0),
            other => panic!("expected OracleFailure, got {other:?}"),
        }
    }
}
