use crate::error::{Error, Result};
use crate::path::ControlPath;

use super::model::VectorField;

/// Solver grid and states of one forward solve; `states[k]` is `z(s_k)` on
/// the uniform grid `s_k = k/steps` over `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Explicit Euler for an arbitrary dynamics function on `[t0, t1]`.
pub fn euler_integrate<F>(dynamics: F, z0: &[f64], t0: f64, t1: f64, steps: usize) -> Vec<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    assert!(steps >= 1);
    let dt = (t1 - t0) / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut z = z0.to_vec();
    states.push(z.clone());
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let dz = dynamics(t, &z);
        for (zi, di) in z.iter_mut().zip(&dz) {
            *zi += dt * di;
        }
        states.push(z.clone());
    }
    states
}

/// Euler solve of the controlled dynamics
/// `z_{k+1} = z_k + Δs · f(s_k, z_k) · Φ̇(s_k)` on the uniform grid.
pub fn euler_solve(
    field: &VectorField,
    path: &ControlPath,
    z0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    assert!(steps >= 1, "euler_solve needs at least one step");
    let ds = 1.0 / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut grid = Vec::with_capacity(steps + 1);
    let mut z = z0.to_vec();
    states.push(z.clone());
    grid.push(0.0);
    for k in 0..steps {
        let s = k as f64 * ds;
        let phidot = path.deriv(s);
        let dz = field.apply(s, &z, &phidot);
        for (zi, di) in z.iter_mut().zip(&dz) {
            *zi += ds * di;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDiverged { step: k + 1 });
        }
        states.push(z.clone());
        grid.push((k + 1) as f64 * ds);
    }
    Ok(Trajectory { grid, states })
}
