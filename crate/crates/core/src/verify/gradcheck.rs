use crate::cde::{adjoint_backward, CdeModel, GradientBundle};
use crate::error::Result;
use crate::path::ObservationGrid;

use super::CheckResult;

/// Relative gradient discrepancy between the adjoint and discrete engines
/// at each step count.
pub fn discrepancy_series(
    model: &CdeModel,
    grid: &ObservationGrid,
    label: usize,
    steps: &[usize],
) -> Result<Vec<f64>> {
    let mut series = Vec::with_capacity(steps.len());
    for &n in steps {
        let (_, discrete) = model.discrete_backprop_steps(grid, label, n)?;
        let (_, adjoint) = adjoint_backward(model, grid, label, n)?;
        series.push(GradientBundle::relative_l2_distance(&adjoint, &discrete));
    }
    Ok(series)
}

/// Pass rule: discrepancies decrease monotonically (10% noise allowance)
/// and the entry at 64 steps — when present — is at most 5e-3.
pub fn assess_discrepancy_series(steps: &[usize], series: &[f64]) -> bool {
    let monotone = series.windows(2).all(|w| w[1] <= w[0] * 1.1);
    let at_64 = steps
        .iter()
        .position(|&s| s == 64)
        .map(|i| series[i] <= 5e-3)
        .unwrap_or(true);
    let last_small = series.last().map(|&r| r <= 5e-2).unwrap_or(false);
    monotone && at_64 && last_small
}

/// Adjoint-vs-discrete agreement as a suite check.
pub fn check_gradient_consistency(
    model: &CdeModel,
    grid: &ObservationGrid,
    label: usize,
    steps: &[usize],
) -> Result<CheckResult> {
    let series = discrepancy_series(model, grid, label, steps)?;
    let passed = assess_discrepancy_series(steps, &series);
    Ok(CheckResult::new(
        "gradient_consistency",
        passed,
        serde_json::json!({"steps": steps, "relative_discrepancy": series}),
    ))
}
