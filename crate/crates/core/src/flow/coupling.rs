use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gate::TimeGate;
use crate::nn::{Mlp, OutputActivation, ParamReader, Params};

/// Affine coupling layer
/// `F(t)_{d₁} = z_{d₁}·exp(u(t, z_{d₂})·φ_u(t)) + v(t, z_{d₂})·φ_v(t)`,
/// identity on `d₂`.
///
/// The partition is contiguous: layers at even stack positions transform the
/// leading ⌈d/2⌉ coordinates, odd positions the trailing ⌈d/2⌉, so every
/// coordinate is transformed across two consecutive layers. The scale
/// network ends in tanh, which keeps the exponent in (−1, 1) and the scaling
/// away from overflow. Both gates vanish at `t = 0`, giving exact identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingLayer {
    pub(crate) gate_u: TimeGate,
    pub(crate) gate_v: TimeGate,
    pub(crate) scale_net: Mlp,
    pub(crate) shift_net: Mlp,
    dim: usize,
    flip: bool,
}

struct CouplingTrace {
    x2: Vec<f64>,
    uo: Vec<f64>,
    vo: Vec<f64>,
    /// exp(uo·φ_u) per transformed coordinate.
    scale: Vec<f64>,
}

impl CouplingLayer {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: &[usize], flip: bool, rng: &mut R) -> Self {
        let keep = dim / 2;
        let transformed = dim - keep;
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(1 + keep);
        dims.extend_from_slice(hidden);
        dims.push(transformed);
        Self {
            gate_u: TimeGate::unit(),
            gate_v: TimeGate::unit(),
            scale_net: Mlp::new(&dims, OutputActivation::Tanh, None, rng),
            shift_net: Mlp::new(&dims, OutputActivation::Identity, None, rng),
            dim,
            flip,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(transformed, conditioning)` index ranges.
    pub fn partition(&self) -> (Range<usize>, Range<usize>) {
        let keep = self.dim / 2;
        if self.flip {
            (keep..self.dim, 0..keep)
        } else {
            (0..(self.dim - keep), (self.dim - keep)..self.dim)
        }
    }

    fn conditioning_input(&self, t: f64, state: &[f64]) -> Vec<f64> {
        let (_, d2) = self.partition();
        let mut x2 = Vec::with_capacity(1 + d2.len());
        x2.push(t);
        x2.extend_from_slice(&state[d2]);
        x2
    }

    fn trace(&self, t: f64, z: &[f64]) -> CouplingTrace {
        let x2 = self.conditioning_input(t, z);
        let uo = self.scale_net.eval(&x2);
        let vo = self.shift_net.eval(&x2);
        let phi_u = self.gate_u.phi(t);
        let scale = uo.iter().map(|u| (u * phi_u).exp()).collect();
        CouplingTrace { x2, uo, vo, scale }
    }

    pub fn forward(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let tr = self.trace(t, z);
        let phi_v = self.gate_v.phi(t);
        let (d1, _) = self.partition();
        let mut y = z.to_vec();
        for (i, gi) in d1.enumerate() {
            y[gi] = z[gi] * tr.scale[i] + tr.vo[i] * phi_v;
        }
        y
    }

    /// Exact inverse; the conditioning half passes through unchanged, so the
    /// trace can be rebuilt from `y` directly.
    pub fn invert(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let tr = self.trace(t, y);
        let phi_v = self.gate_v.phi(t);
        let (d1, _) = self.partition();
        let mut z = y.to_vec();
        for (i, gi) in d1.enumerate() {
            z[gi] = (y[gi] - tr.vo[i] * phi_v) / tr.scale[i];
        }
        z
    }

    /// `log|det ∂F/∂z| = Σ_{d₁} u·φ_u(t)` in closed form.
    pub fn log_det_jacobian(&self, t: f64, z: &[f64]) -> f64 {
        let tr = self.trace(t, z);
        let phi_u = self.gate_u.phi(t);
        tr.uo.iter().map(|u| u * phi_u).sum()
    }

    pub fn forward_with_derivative(&self, t: f64, z: &[f64], zdot: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let tr = self.trace(t, z);
        let phi_u = self.gate_u.phi(t);
        let phi_v = self.gate_v.phi(t);
        let phi_u_dot = self.gate_u.phi_dot(t);
        let phi_v_dot = self.gate_v.phi_dot(t);
        let (d1, d2) = self.partition();
        let mut u_tan = Vec::with_capacity(1 + d2.len());
        u_tan.push(1.0);
        u_tan.extend_from_slice(&zdot[d2]);
        let uo_dot = self.scale_net.jvp_slice(&tr.x2, &u_tan);
        let vo_dot = self.shift_net.jvp_slice(&tr.x2, &u_tan);
        let mut y = z.to_vec();
        let mut y_dot = zdot.to_vec();
        for (i, gi) in d1.enumerate() {
            let e = tr.scale[i];
            let e_dot = e * (uo_dot[i] * phi_u + tr.uo[i] * phi_u_dot);
            y[gi] = z[gi] * e + tr.vo[i] * phi_v;
            y_dot[gi] = zdot[gi] * e + z[gi] * e_dot + vo_dot[i] * phi_v + tr.vo[i] * phi_v_dot;
        }
        (y, y_dot)
    }

    pub fn jvp_state(&self, t: f64, z: &[f64], w: &[f64]) -> Vec<f64> {
        let tr = self.trace(t, z);
        let phi_u = self.gate_u.phi(t);
        let phi_v = self.gate_v.phi(t);
        let (d1, d2) = self.partition();
        let mut u_tan = Vec::with_capacity(1 + d2.len());
        u_tan.push(0.0);
        u_tan.extend_from_slice(&w[d2]);
        let uo_w = self.scale_net.jvp_slice(&tr.x2, &u_tan);
        let vo_w = self.shift_net.jvp_slice(&tr.x2, &u_tan);
        let mut out = w.to_vec();
        for (i, gi) in d1.enumerate() {
            out[gi] =
                w[gi] * tr.scale[i] + z[gi] * tr.scale[i] * phi_u * uo_w[i] + phi_v * vo_w[i];
        }
        out
    }

    /// Gradient layout: `[gate_u.raw, gate_v.raw, scale_net, shift_net]`.
    pub fn backprop_value(&self, t: f64, z: &[f64], cot: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let tr = self.trace(t, z);
        let phi_u = self.gate_u.phi(t);
        let phi_v = self.gate_v.phi(t);
        let (d1, d2) = self.partition();
        let n1 = d1.len();
        let mut c_uo = vec![0.0; n1];
        let mut c_vo = vec![0.0; n1];
        let mut c_phi_u = 0.0;
        let mut c_phi_v = 0.0;
        let mut c_z = cot.to_vec();
        for (i, gi) in d1.enumerate() {
            let c = cot[gi];
            c_z[gi] = c * tr.scale[i];
            // ∂/∂(uo·φ_u) of z·exp(uo·φ_u) = z·scale
            let c_exponent = c * z[gi] * tr.scale[i];
            c_uo[i] = c_exponent * phi_u;
            c_phi_u += c_exponent * tr.uo[i];
            c_vo[i] = c * phi_v;
            c_phi_v += c * tr.vo[i];
        }
        let ns = self.scale_net.param_count();
        let x_bar_u = self.scale_net.vjp_slice(&tr.x2, &c_uo, &mut grad[2..2 + ns]);
        let x_bar_v = self.shift_net.vjp_slice(&tr.x2, &c_vo, &mut grad[2 + ns..]);
        for (i, gi) in d2.enumerate() {
            c_z[gi] += x_bar_u[i + 1] + x_bar_v[i + 1];
        }
        grad[0] += self.gate_u.grad_raw(t, c_phi_u, 0.0);
        grad[1] += self.gate_v.grad_raw(t, c_phi_v, 0.0);
        c_z
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
        let tr = self.trace(t, z);
        let phi_u = self.gate_u.phi(t);
        let phi_v = self.gate_v.phi(t);
        let phi_u_dot = self.gate_u.phi_dot(t);
        let phi_v_dot = self.gate_v.phi_dot(t);
        let (d1, d2) = self.partition();
        let n1 = d1.len();
        let mut u_tan = Vec::with_capacity(1 + d2.len());
        u_tan.push(1.0);
        u_tan.extend_from_slice(&zdot[d2.clone()]);
        let uo_dot = self.scale_net.jvp_slice(&tr.x2, &u_tan);
        let vo_dot = self.shift_net.jvp_slice(&tr.x2, &u_tan);

        let mut c_z = vec![0.0; self.dim];
        let mut c_zdot = vec![0.0; self.dim];
        for gi in d2.clone() {
            c_z[gi] += c_val[gi];
            c_zdot[gi] += c_dot[gi];
        }
        let mut c_uo = vec![0.0; n1];
        let mut c_vo = vec![0.0; n1];
        let mut c_uo_dot = vec![0.0; n1];
        let mut c_vo_dot = vec![0.0; n1];
        let (mut c_phi_u, mut c_phi_v, mut c_phi_u_dot, mut c_phi_v_dot) = (0.0, 0.0, 0.0, 0.0);
        for (i, gi) in d1.enumerate() {
            let e = tr.scale[i];
            let exponent_dot = uo_dot[i] * phi_u + tr.uo[i] * phi_u_dot;
            let e_dot = e * exponent_dot;
            // y = z·e + vo·φ_v
            let mut c_e = c_val[gi] * z[gi];
            c_z[gi] += c_val[gi] * e;
            c_vo[i] += c_val[gi] * phi_v;
            c_phi_v += c_val[gi] * tr.vo[i];
            // ẏ = ż·e + z·ė + v̇o·φ_v + vo·φ̇_v
            c_zdot[gi] += c_dot[gi] * e;
            c_e += c_dot[gi] * zdot[gi];
            c_z[gi] += c_dot[gi] * e_dot;
            let c_e_dot = c_dot[gi] * z[gi];
            c_vo_dot[i] += c_dot[gi] * phi_v;
            c_vo[i] += c_dot[gi] * phi_v_dot;
            c_phi_v_dot += c_dot[gi] * tr.vo[i];
            c_phi_v += c_dot[gi] * vo_dot[i];
            // ė = e·(u̇o·φ_u + uo·φ̇_u)
            c_e += c_e_dot * exponent_dot;
            c_uo_dot[i] += c_e_dot * e * phi_u;
            c_phi_u += c_e_dot * e * uo_dot[i];
            c_uo[i] += c_e_dot * e * phi_u_dot;
            c_phi_u_dot += c_e_dot * e * tr.uo[i];
            // e = exp(uo·φ_u)
            c_uo[i] += c_e * e * phi_u;
            c_phi_u += c_e * e * tr.uo[i];
        }

        let ns = self.scale_net.param_count();
        let (xu, uu) = self.scale_net.vjp_pair(
            &tr.x2,
            &u_tan,
            Some(&c_uo),
            &c_uo_dot,
            &mut grad[2..2 + ns],
        );
        let (xv, uv) = self.shift_net.vjp_pair(
            &tr.x2,
            &u_tan,
            Some(&c_vo),
            &c_vo_dot,
            &mut grad[2 + ns..],
        );
        for (i, gi) in d2.enumerate() {
            c_z[gi] += xu[i + 1] + xv[i + 1];
            c_zdot[gi] += uu[i + 1] + uv[i + 1];
        }
        grad[0] += self.gate_u.grad_raw(t, c_phi_u, c_phi_u_dot);
        grad[1] += self.gate_v.grad_raw(t, c_phi_v, c_phi_v_dot);
        (c_z, c_zdot)
    }
}

impl Params for CouplingLayer {
    fn param_count(&self) -> usize {
        2 + self.scale_net.param_count() + self.shift_net.param_count()
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        self.gate_u.pack_into(out);
        self.gate_v.pack_into(out);
        self.scale_net.pack_into(out);
        self.shift_net.pack_into(out);
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        self.gate_u.unpack_from(reader);
        self.gate_v.unpack_from(reader);
        self.scale_net.unpack_from(reader);
        self.shift_net.unpack_from(reader);
    }
}
