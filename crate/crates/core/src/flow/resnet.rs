use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gate::TimeGate;
use crate::nn::{Mlp, OutputActivation, ParamReader, Params};

/// Residual flow layer `F(t, z) = z + φ(t)·g(t, z)`.
///
/// Every layer of `g` carries a spectral cap, so the increment's Lipschitz
/// constant in `z` is at most `|φ(t)|·capᴸ < 1` and the layer is invertible
/// by fixed-point iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResNetLayer {
    pub(crate) gate: TimeGate,
    pub(crate) net: Mlp,
    dim: usize,
}

impl ResNetLayer {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: &[usize], sn_cap: f64, rng: &mut R) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(1 + dim);
        dims.extend_from_slice(hidden);
        dims.push(dim);
        Self {
            gate: TimeGate::unit(),
            net: Mlp::new(&dims, OutputActivation::Identity, Some(sn_cap), rng),
            dim,
        }
    }

    pub fn from_parts(gate: TimeGate, net: Mlp) -> Self {
        let dim = net.out_dim();
        assert_eq!(net.in_dim(), dim + 1);
        Self { gate, net, dim }
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

    /// The residual increment `φ(t)·g(t, z)`.
    pub fn increment(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let phi = self.gate.phi(t);
        let mut g = self.net.eval(&Self::with_time(t, z));
        for v in &mut g {
            *v *= phi;
        }
        g
    }

    pub fn forward(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let inc = self.increment(t, z);
        z.iter().zip(inc).map(|(a, b)| a + b).collect()
    }

    /// Propagates the layer value together with its total time derivative:
    /// for input `(z, ż)` returns `(F(t,z), dF/dt)` where
    /// `dF/dt = ż + φ′·g + φ·(∂g/∂t + ∂g/∂z·ż)`.
    pub fn forward_with_derivative(&self, t: f64, z: &[f64], zdot: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let phi = self.gate.phi(t);
        let phi_dot = self.gate.phi_dot(t);
        let x = Self::with_time(t, z);
        let mut u = Vec::with_capacity(zdot.len() + 1);
        u.push(1.0);
        u.extend_from_slice(zdot);
        let g = self.net.eval(&x);
        let g_dot = self.net.jvp_slice(&x, &u);
        let y = z.iter().zip(&g).map(|(a, b)| a + phi * b).collect();
        let y_dot = zdot
            .iter()
            .zip(g.iter().zip(&g_dot))
            .map(|(zd, (gv, gd))| zd + phi_dot * gv + phi * gd)
            .collect();
        (y, y_dot)
    }

    /// `(∂F/∂z)·w = w + φ·(∂g/∂z)·w`
    pub fn jvp_state(&self, t: f64, z: &[f64], w: &[f64]) -> Vec<f64> {
        let phi = self.gate.phi(t);
        let x = Self::with_time(t, z);
        let mut u = Vec::with_capacity(w.len() + 1);
        u.push(0.0);
        u.extend_from_slice(w);
        let jw = self.net.jvp_slice(&x, &u);
        w.iter().zip(jw).map(|(a, b)| a + phi * b).collect()
    }

    /// Reverse pass of `forward`. Gradient layout: `[gate.raw, net params]`.
    pub fn backprop_value(&self, t: f64, z: &[f64], cot: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let phi = self.gate.phi(t);
        let x = Self::with_time(t, z);
        let g = self.net.eval(&x);
        let c_g: Vec<f64> = cot.iter().map(|c| c * phi).collect();
        let c_phi = crate::linalg::dot(cot, &g);
        let x_bar = self.net.vjp_slice(&x, &c_g, &mut grad[1..]);
        grad[0] += self.gate.grad_raw(t, c_phi, 0.0);
        cot.iter()
            .zip(&x_bar[1..])
            .map(|(c, xb)| c + xb)
            .collect()
    }

    /// Reverse pass of `forward_with_derivative` with cotangents on both the
    /// value and the time derivative. Returns `(c_z, c_zdot)`.
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
        let x = Self::with_time(t, z);
        let mut u = Vec::with_capacity(zdot.len() + 1);
        u.push(1.0);
        u.extend_from_slice(zdot);
        let g = self.net.eval(&x);
        let g_dot = self.net.jvp_slice(&x, &u);

        // y = z + φ·g;  ẏ = ż + φ′·g + φ·ġ
        let c_g: Vec<f64> = c_val
            .iter()
            .zip(c_dot)
            .map(|(cv, cd)| cv * phi + cd * phi_dot)
            .collect();
        let c_gdot: Vec<f64> = c_dot.iter().map(|cd| cd * phi).collect();
        let c_phi = crate::linalg::dot(c_val, &g) + crate::linalg::dot(c_dot, &g_dot);
        let c_phi_dot = crate::linalg::dot(c_dot, &g);

        let (x_bar, u_bar) = self
            .net
            .vjp_pair(&x, &u, Some(&c_g), &c_gdot, &mut grad[1..]);
        grad[0] += self.gate.grad_raw(t, c_phi, c_phi_dot);

        let c_z = c_val
            .iter()
            .zip(&x_bar[1..])
            .map(|(c, xb)| c + xb)
            .collect();
        let c_zdot = c_dot
            .iter()
            .zip(&u_bar[1..])
            .map(|(c, ub)| c + ub)
            .collect();
        (c_z, c_zdot)
    }
}

impl Params for ResNetLayer {
    fn param_count(&self) -> usize {
        1 + self.net.param_count()
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        self.gate.pack_into(out);
        self.net.pack_into(out);
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        self.gate.unpack_from(reader);
        self.net.unpack_from(reader);
    }
}
