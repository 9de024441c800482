use serde::{Deserialize, Serialize};

use crate::nn::ParamVector;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ParamVector, grads: &ParamVector, state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len(), "param/grad shape mismatch");
    assert_eq!(params.len(), state.m.len(), "param/state shape mismatch");
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    let p = params.as_mut_slice();
    let g = grads.as_slice();
    for i in 0..p.len() {
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g[i];
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged_but_decay_moments() {
        let mut params = ParamVector(vec![1.0, -2.0]);
        let mut state = AdamState::new(2);
        // Prime the moments with one real step.
        adam_step(
            &mut params,
            &ParamVector(vec![0.5, 0.5]),
            &mut state,
            0.0,
        );
        let m_before = state.m.clone();
        let before = params.clone();
        adam_step(&mut params, &ParamVector(vec![0.0, 0.0]), &mut state, 0.0);
        assert_eq!(params, before);
        for (after, before) in state.m.iter().zip(&m_before) {
            assert!((after - before * BETA1).abs() < 1e-16);
        }
    }

    #[test]
    fn first_step_is_normalized_gradient() {
        // After bias correction, m̂ = g and v̂ = g², so the first update is
        // −lr·g/(|g| + ε).
        let g = vec![0.3, -2.0, 1e-3];
        let mut params = ParamVector(vec![0.0; 3]);
        let mut state = AdamState::new(3);
        adam_step(&mut params, &ParamVector(g.clone()), &mut state, 0.01);
        for (p, gi) in params.as_slice().iter().zip(&g) {
            let expect = -0.01 * gi / (gi.abs() + EPS);
            assert!((p - expect).abs() < 1e-12, "{p} vs {expect}");
        }
    }

    #[test]
    fn matches_scalar_reference_loop_over_100_steps() {
        let mut params = ParamVector(vec![0.7]);
        let mut state = AdamState::new(1);

        // Independent scalar implementation.
        let (mut x, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        let lr = 0.005;
        for t in 1..=100 {
            let g = x.sin() + 0.1 * x; // arbitrary smooth gradient
            adam_step(&mut params, &ParamVector(vec![g]), &mut state, lr);

            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);

            assert!(
                (params.0[0] - x).abs() < 1e-14,
                "diverged at step {t}: {} vs {x}",
                params.0[0]
            );
        }
    }
}
