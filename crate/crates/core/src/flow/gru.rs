use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gate::TimeGate;
use crate::nn::{Mlp, OutputActivation, ParamReader, Params};

/// Scale on the gated increment that keeps it contractive in `z`.
pub const RESIDUAL_SCALE: f64 = 0.9;

/// Gated flow layer
/// `F(t, z) = z + β·φ(t)·(1 − f₁(t, z)) ⊙ (f₂(t, z) − z)`.
///
/// `f₁` has a sigmoid output so the gate stays in `(0, 1)`; both sub-networks
/// are spectrally capped; `β < 1` absorbs the remaining slack so the
/// increment is a sampled contraction and fixed-point inversion converges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruLayer {
    pub(crate) gate: TimeGate,
    pub(crate) gate_net: Mlp,
    pub(crate) cand_net: Mlp,
    dim: usize,
}

struct GruTrace {
    x: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    q: Vec<f64>,
}

impl GruLayer {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: &[usize], sn_cap: f64, rng: &mut R) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(1 + dim);
        dims.extend_from_slice(hidden);
        dims.push(dim);
        Self {
            gate: TimeGate::unit(),
            gate_net: Mlp::new(&dims, OutputActivation::Sigmoid, Some(sn_cap), rng),
            cand_net: Mlp::new(&dims, OutputActivation::Identity, Some(sn_cap), rng),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn with_time(t: f64, z: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(z.len() + 1);
        x.push(t);
        x.extend_from_slice(z);
        x
    }

    fn trace(&self, t: f64, z: &[f64]) -> GruTrace {
        let x = Self::with_time(t, z);
        let f1 = self.gate_net.eval(&x);
        let f2 = self.cand_net.eval(&x);
        let q = f1
            .iter()
            .zip(&f2)
            .zip(z)
            .map(|((g, c), zz)| (1.0 - g) * (c - zz))
            .collect();
        GruTrace { x, f1, f2, q }
    }

    /// The increment `β·φ(t)·(1 − f₁) ⊙ (f₂ − z)`.
    pub fn increment(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let s = RESIDUAL_SCALE * self.gate.phi(t);
        self.trace(t, z).q.iter().map(|v| s * v).collect()
    }

    pub fn forward(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let inc = self.increment(t, z);
        z.iter().zip(inc).map(|(a, b)| a + b).collect()
    }

    pub fn forward_with_derivative(&self, t: f64, z: &[f64], zdot: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let phi = self.gate.phi(t);
        let phi_dot = self.gate.phi_dot(t);
        let tr = self.trace(t, z);
        let mut u = Vec::with_capacity(zdot.len() + 1);
        u.push(1.0);
        u.extend_from_slice(zdot);
        let f1_dot = self.gate_net.jvp_slice(&tr.x, &u);
        let f2_dot = self.cand_net.jvp_slice(&tr.x, &u);
        // q̇ = −ḟ₁⊙(f₂ − z) + (1 − f₁)⊙(ḟ₂ − ż)
        let q_dot: Vec<f64> = (0..self.dim)
            .map(|i| {
                -f1_dot[i] * (tr.f2[i] - z[i]) + (1.0 - tr.f1[i]) * (f2_dot[i] - zdot[i])
            })
            .collect();
        let y = z
            .iter()
            .zip(&tr.q)
            .map(|(zz, q)| zz + RESIDUAL_SCALE * phi * q)
            .collect();
        let y_dot = (0..self.dim)
            .map(|i| zdot[i] + RESIDUAL_SCALE * (phi_dot * tr.q[i] + phi * q_dot[i]))
            .collect();
        (y, y_dot)
    }

    pub fn jvp_state(&self, t: f64, z: &[f64], w: &[f64]) -> Vec<f64> {
        let phi = self.gate.phi(t);
        let tr = self.trace(t, z);
        let mut u = Vec::with_capacity(w.len() + 1);
        u.push(0.0);
        u.extend_from_slice(w);
        let f1_w = self.gate_net.jvp_slice(&tr.x, &u);
        let f2_w = self.cand_net.jvp_slice(&tr.x, &u);
        (0..self.dim)
            .map(|i| {
                let q_w = -f1_w[i] * (tr.f2[i] - z[i]) + (1.0 - tr.f1[i]) * (f2_w[i] - w[i]);
                w[i] + RESIDUAL_SCALE * phi * q_w
            })
            .collect()
    }

    /// Gradient layout: `[gate.raw, gate_net params, cand_net params]`.
    pub fn backprop_value(&self, t: f64, z: &[f64], cot: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let phi = self.gate.phi(t);
        let tr = self.trace(t, z);
        let s = RESIDUAL_SCALE;
        let c_q: Vec<f64> = cot.iter().map(|c| c * s * phi).collect();
        let c_phi = s * crate::linalg::dot(cot, &tr.q);
        // q = (1 − f₁)⊙(f₂ − z)
        let c_f1: Vec<f64> = (0..self.dim).map(|i| -c_q[i] * (tr.f2[i] - z[i])).collect();
        let c_f2: Vec<f64> = (0..self.dim).map(|i| c_q[i] * (1.0 - tr.f1[i])).collect();
        let n1 = self.gate_net.param_count();
        let x_bar1 = self.gate_net.vjp_slice(&tr.x, &c_f1, &mut grad[1..1 + n1]);
        let x_bar2 = self.cand_net.vjp_slice(&tr.x, &c_f2, &mut grad[1 + n1..]);
        grad[0] += self.gate.grad_raw(t, c_phi, 0.0);
        (0..self.dim)
            .map(|i| cot[i] - c_q[i] * (1.0 - tr.f1[i]) + x_bar1[i + 1] + x_bar2[i + 1])
            .collect()
    }

    pub fn backprop_derivative(
        &self,
        t: f64,
        z: &[f64],
        zdot: &[f64],
        c_val: &[f64],
        c_dot: &[f64],
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let phi = self.gate.phi(t);
        let phi_dot = self.gate.phi_dot(t);
        let s = RESIDUAL_SCALE;
        let tr = self.trace(t, z);
        let mut u = Vec::with_capacity(zdot.len() + 1);
        u.push(1.0);
        u.extend_from_slice(zdot);
        let f1_dot = self.gate_net.jvp_slice(&tr.x, &u);
        let f2_dot = self.cand_net.jvp_slice(&tr.x, &u);
        let q_dot: Vec<f64> = (0..self.dim)
            .map(|i| {
                -f1_dot[i] * (tr.f2[i] - z[i]) + (1.0 - tr.f1[i]) * (f2_dot[i] - zdot[i])
            })
            .collect();

        // y = z + s·φ·q;  ẏ = ż + s·(φ′·q + φ·q̇)
        let c_q: Vec<f64> = (0..self.dim)
            .map(|i| c_val[i] * s * phi + c_dot[i] * s * phi_dot)
            .collect();
        let c_qdot: Vec<f64> = c_dot.iter().map(|c| c * s * phi).collect();
        let c_phi = s * (crate::linalg::dot(c_val, &tr.q) + crate::linalg::dot(c_dot, &q_dot));
        let c_phi_dot = s * crate::linalg::dot(c_dot, &tr.q);

        let mut c_z = vec![0.0; self.dim];
        let mut c_zdot = vec![0.0; self.dim];
        let mut c_f1 = vec![0.0; self.dim];
        let mut c_f2 = vec![0.0; self.dim];
        let mut c_f1dot = vec![0.0; self.dim];
        let mut c_f2dot = vec![0.0; self.dim];
        for i in 0..self.dim {
            // direct passthrough terms
            c_z[i] += c_val[i];
            c_zdot[i] += c_dot[i];
            // q = (1 − f₁)⊙(f₂ − z)
            c_f1[i] += -c_q[i] * (tr.f2[i] - z[i]);
            c_f2[i] += c_q[i] * (1.0 - tr.f1[i]);
            c_z[i] += -c_q[i] * (1.0 - tr.f1[i]);
            // q̇ = −ḟ₁⊙(f₂ − z) + (1 − f₁)⊙(ḟ₂ − ż)
            c_f1dot[i] += -c_qdot[i] * (tr.f2[i] - z[i]);
            c_f2[i] += -c_qdot[i] * f1_dot[i];
            c_z[i] += c_qdot[i] * f1_dot[i];
            c_f1[i] += -c_qdot[i] * (f2_dot[i] - zdot[i]);
            c_f2dot[i] += c_qdot[i] * (1.0 - tr.f1[i]);
            c_zdot[i] += -c_qdot[i] * (1.0 - tr.f1[i]);
        }

        let n1 = self.gate_net.param_count();
        let (x1, u1) = self.gate_net.vjp_pair(
            &tr.x,
            &u,
            Some(&c_f1),
            &c_f1dot,
            &mut grad[1..1 + n1],
        );
        let (x2, u2) = self
            .cand_net
            .vjp_pair(&tr.x, &u, Some(&c_f2), &c_f2dot, &mut grad[1 + n1..]);
        grad[0] += self.gate.grad_raw(t, c_phi, c_phi_dot);
        for i in 0..self.dim {
            c_z[i] += x1[i + 1] + x2[i + 1];
            c_zdot[i] += u1[i + 1] + u2[i + 1];
        }
        (c_z, c_zdot)
    }
}

impl Params for GruLayer {
    fn param_count(&self) -> usize {
        1 + self.gate_net.param_count() + self.cand_net.param_count()
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        self.gate.pack_into(out);
        self.gate_net.pack_into(out);
        self.cand_net.pack_into(out);
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        self.gate.unpack_from(reader);
        self.gate_net.unpack_from(reader);
        self.cand_net.unpack_from(reader);
    }
}
