use crate::error::Result;
use crate::path::{ControlPath, ObservationGrid};

use super::loss::cross_entropy_with_grad;
use super::model::{CdeModel, GradientBundle, VectorField};
use super::solver::{euler_solve, Trajectory};

/// Integrates the adjoint equation
/// `da/dt = −aᵀ·∂/∂z[f(t,z)·Φ̇(t)]` backward over the forward trajectory's
/// grid with explicit Euler steps, starting from `a(T) = a_final`.
///
/// Returns `a` at every grid point, indexed like the trajectory's states.
pub fn integrate_adjoint(
    field: &VectorField,
    path: &ControlPath,
    trajectory: &Trajectory,
    a_final: &[f64],
) -> Vec<Vec<f64>> {
    let steps = trajectory.steps();
    let ds = 1.0 / steps as f64;
    let mut adjoints = vec![Vec::new(); steps + 1];
    adjoints[steps] = a_final.to_vec();
    for k in (0..steps).rev() {
        // Explicit step backward from s_{k+1}: the state Jacobian is
        // evaluated at the current (right) grid point, which is what
        // distinguishes this engine from the exact discrete reverse sweep.
        let s_next = trajectory.grid[k + 1];
        let z_next = &trajectory.states[k + 1];
        let phidot = path.deriv(s_next);
        let a_next = adjoints[k + 1].clone();
        let (c_z, _) = field.vjp_dynamics(s_next, z_next, &phidot, &a_next, None);
        adjoints[k] = a_next
            .iter()
            .zip(&c_z)
            .map(|(a, j)| a + ds * j)
            .collect();
    }
    adjoints
}

/// Adjoint-sensitivity gradients: forward solve, backward adjoint
/// integration, and left-endpoint quadrature of the parameter integral
/// `∫ aᵀ·∂/∂θ[f·Φ̇] dt`. Head and embedding gradients are the same exact
/// reverse passes the discrete engine uses.
pub fn adjoint_backward(
    model: &CdeModel,
    grid: &ObservationGrid,
    label: usize,
    steps: usize,
) -> Result<(f64, GradientBundle)> {
    let path = model.build_path(grid)?;
    let phi0 = path.eval(0.0);
    let z0 = model.embed.eval(&phi0);
    let trajectory = euler_solve(&model.field, &path, &z0, steps)?;
    let ds = 1.0 / steps as f64;

    let logits = model.head.eval(trajectory.final_state());
    let (loss, dlogits) = cross_entropy_with_grad(&logits, label);

    let mut grads = GradientBundle::zeros_for(model);

    // a(T) = ∂L/∂z(T)
    let a_final = model.head.vjp_slice(
        trajectory.final_state(),
        &dlogits,
        grads.head.as_mut_slice(),
    );

    let adjoints = integrate_adjoint(&model.field, &path, &trajectory, &a_final);
    if adjoints
        .iter()
        .any(|a| a.iter().any(|v| !v.is_finite()))
    {
        return Err(crate::error::Error::NonFinite {
            context: "adjoint state".into(),
            index: 0,
        });
    }

    // Left-endpoint quadrature of ∫ aᵀ ∂_θ[f·Φ̇] dt on the forward grid.
    for k in 0..steps {
        let s = trajectory.grid[k];
        let z_k = &trajectory.states[k];
        let phidot = path.deriv(s);
        let weighted: Vec<f64> = adjoints[k].iter().map(|a| a * ds).collect();
        let (_, c_phidot) = model.field.vjp_dynamics(
            s,
            z_k,
            &phidot,
            &weighted,
            Some(grads.field.as_mut_slice()),
        );
        path.deriv_vjp(s, &c_phidot, grads.path.as_mut_slice());
    }

    // Embedding through a(0).
    model
        .embed
        .vjp_slice(&phi0, &adjoints[0], grads.embed.as_mut_slice());

    Ok((loss, grads))
}
