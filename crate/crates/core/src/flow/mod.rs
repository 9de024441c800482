//! Invertible flows `F(t, ·; θ_F)` over the observation space.
//!
//! Three architectures share one contract: `F(0, z) = z` exactly (the time
//! gates vanish at zero), `F(t, ·)` is a diffeomorphism for every `t`, and
//! the time derivative `∂F/∂t` is available analytically. Residual-style
//! layers (ResNet, GRU) certify invertibility through contractive increments
//! and invert by fixed-point iteration; coupling layers invert in closed
//! form and expose their log-det Jacobian as a sum.

mod coupling;
mod gate;
mod gru;
mod hutchinson;
mod resnet;

pub use coupling::CouplingLayer;
pub use gate::TimeGate;
pub use gru::{GruLayer, RESIDUAL_SCALE};
pub use hutchinson::{dense_jacobian, exact_divergence, hutchinson_divergence, DifferentiableField};
pub use resnet::ResNetLayer;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamReader, Params, Tensor};

/// Default tolerance for fixed-point inversion.
pub const INVERSE_TOL: f64 = 1e-8;
/// Default iteration budget for fixed-point inversion.
pub const INVERSE_MAX_ITERS: usize = 200;
/// Exact log-det Jacobians assemble a dense d×d matrix; cap the dimension.
pub const EXACT_LOGDET_MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    ResNet,
    Gru,
    Coupling,
}

impl std::fmt::Display for FlowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowKind::ResNet => write!(f, "resnet"),
            FlowKind::Gru => write!(f, "gru"),
            FlowKind::Coupling => write!(f, "coupling"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FlowLayer {
    ResNet(ResNetLayer),
    Gru(GruLayer),
    Coupling(CouplingLayer),
}

impl FlowLayer {
    fn forward(&self, t: f64, z: &[f64]) -> Vec<f64> {
        match self {
            FlowLayer::ResNet(l) => l.forward(t, z),
            FlowLayer::Gru(l) => l.forward(t, z),
            FlowLayer::Coupling(l) => l.forward(t, z),
        }
    }

    fn forward_with_derivative(&self, t: f64, z: &[f64], zdot: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            FlowLayer::ResNet(l) => l.forward_with_derivative(t, z, zdot),
            FlowLayer::Gru(l) => l.forward_with_derivative(t, z, zdot),
            FlowLayer::Coupling(l) => l.forward_with_derivative(t, z, zdot),
        }
    }

    fn jvp_state(&self, t: f64, z: &[f64], w: &[f64]) -> Vec<f64> {
        match self {
            FlowLayer::ResNet(l) => l.jvp_state(t, z, w),
            FlowLayer::Gru(l) => l.jvp_state(t, z, w),
            FlowLayer::Coupling(l) => l.jvp_state(t, z, w),
        }
    }

    fn backprop_value(&self, t: f64, z: &[f64], cot: &[f64], grad: &mut [f64]) -> Vec<f64> {
        match self {
            FlowLayer::ResNet(l) => l.backprop_value(t, z, cot, grad),
            FlowLayer::Gru(l) => l.backprop_value(t, z, cot, grad),
            FlowLayer::Coupling(l) => l.backprop_value(t, z, cot, grad),
        }
    }

    fn backprop_derivative(
        &self,
        t: f64,
        z: &[f64],
        zdot: &[f64],
        c_val: &[f64],
        c_dot: &[f64],
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        match self {
            FlowLayer::ResNet(l) => l.backprop_derivative(t, z, zdot, c_val, c_dot, grad),
            FlowLayer::Gru(l) => l.backprop_derivative(t, z, zdot, c_val, c_dot, grad),
            FlowLayer::Coupling(l) => l.backprop_derivative(t, z, zdot, c_val, c_dot, grad),
        }
    }

    /// Inverts one layer: closed form for coupling, fixed-point iteration
    /// `z ← y − increment(t, z)` for the contractive residual layers.
    fn invert(&self, t: f64, y: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>> {
        match self {
            FlowLayer::Coupling(l) => Ok(l.invert(t, y)),
            FlowLayer::ResNet(_) | FlowLayer::Gru(_) => {
                let increment = |z: &[f64]| -> Vec<f64> {
                    match self {
                        FlowLayer::ResNet(l) => l.increment(t, z),
                        FlowLayer::Gru(l) => l.increment(t, z),
                        FlowLayer::Coupling(_) => unreachable!(),
                    }
                };
                let mut z = y.to_vec();
                let mut residual = f64::INFINITY;
                for _ in 0..max_iters {
                    let inc = increment(&z);
                    residual = 0.0f64;
                    for i in 0..z.len() {
                        let next = y[i] - inc[i];
                        residual = residual.max((z[i] + inc[i] - y[i]).abs());
                        z[i] = next;
                    }
                    if residual <= tol {
                        return Ok(z);
                    }
                }
                Err(Error::NonConvergence {
                    iters: max_iters,
                    residual,
                })
            }
        }
    }

    fn log_det_jacobian(&self, t: f64, z: &[f64]) -> Result<f64> {
        match self {
            FlowLayer::Coupling(l) => Ok(l.log_det_jacobian(t, z)),
            FlowLayer::ResNet(_) | FlowLayer::Gru(_) => {
                let d = z.len();
                if d > EXACT_LOGDET_MAX_DIM {
                    return Err(Error::InvalidInput(format!(
                        "exact log-det limited to dimension {EXACT_LOGDET_MAX_DIM}, got {d}"
                    )));
                }
                let mut jac = vec![0.0; d * d];
                let mut basis = vec![0.0; d];
                for col in 0..d {
                    basis[col] = 1.0;
                    let jcol = self.jvp_state(t, z, &basis);
                    basis[col] = 0.0;
                    for row in 0..d {
                        jac[row * d + col] = jcol[row];
                    }
                }
                crate::linalg::log_abs_det(&jac, d)
            }
        }
    }
}

impl Params for FlowLayer {
    fn param_count(&self) -> usize {
        match self {
            FlowLayer::ResNet(l) => l.param_count(),
            FlowLayer::Gru(l) => l.param_count(),
            FlowLayer::Coupling(l) => l.param_count(),
        }
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        match self {
            FlowLayer::ResNet(l) => l.pack_into(out),
            FlowLayer::Gru(l) => l.pack_into(out),
            FlowLayer::Coupling(l) => l.pack_into(out),
        }
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        match self {
            FlowLayer::ResNet(l) => l.unpack_from(reader),
            FlowLayer::Gru(l) => l.unpack_from(reader),
            FlowLayer::Coupling(l) => l.unpack_from(reader),
        }
    }
}

/// A stack of invertible flow layers of one architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowModule {
    kind: FlowKind,
    dim: usize,
    layers: Vec<FlowLayer>,
}

impl FlowModule {
    pub fn new<R: Rng + ?Sized>(
        kind: FlowKind,
        dim: usize,
        num_layers: usize,
        hidden: &[usize],
        sn_cap: f64,
        rng: &mut R,
    ) -> Self {
        assert!(num_layers >= 1);
        let layers = (0..num_layers)
            .map(|i| match kind {
                FlowKind::ResNet => FlowLayer::ResNet(ResNetLayer::new(dim, hidden, sn_cap, rng)),
                FlowKind::Gru => FlowLayer::Gru(GruLayer::new(dim, hidden, sn_cap, rng)),
                FlowKind::Coupling => {
                    FlowLayer::Coupling(CouplingLayer::new(dim, hidden, i % 2 == 1, rng))
                }
            })
            .collect();
        Self { kind, dim, layers }
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut Vec<FlowLayer> {
        &mut self.layers
    }

    /// Re-projects all spectrally capped sub-networks (residual layers).
    pub fn spectral_normalize_all(&mut self, power_iters: usize) {
        for layer in &mut self.layers {
            match layer {
                FlowLayer::ResNet(l) => {
                    l.net.spectral_normalize_all(power_iters);
                }
                FlowLayer::Gru(l) => {
                    l.gate_net.spectral_normalize_all(power_iters);
                    l.cand_net.spectral_normalize_all(power_iters);
                }
                FlowLayer::Coupling(_) => {}
            }
        }
    }

    fn check_dim(&self, z: &Tensor, context: &'static str) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("flow dimension {}", self.dim),
                got: format!("{}", z.len()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, t: f64, z: &Tensor) -> Result<Tensor> {
        self.check_dim(z, "flow forward")?;
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite time {t}")));
        }
        let out = Tensor::vector(self.forward_slice(t, z.data())?);
        Ok(out)
    }

    pub(crate) fn forward_slice(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let mut state = z.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            state = layer.forward(t, &state);
            if let Some(idx) = state.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("flow layer {i}"),
                    index: idx,
                });
            }
        }
        Ok(state)
    }

    /// `z` with `‖F(t, z) − y‖∞ ≤ tol`; coupling layers ignore `tol` (closed
    /// form), residual layers iterate to it.
    pub fn inverse(&self, t: f64, y: &Tensor, tol: f64, max_iters: usize) -> Result<Tensor> {
        self.check_dim(y, "flow inverse")?;
        assert!(tol > 0.0, "inverse tolerance must be positive");
        let mut state = y.data().to_vec();
        for layer in self.layers.iter().rev() {
            state = layer.invert(t, &state, tol, max_iters)?;
        }
        Ok(Tensor::vector(state))
    }

    /// `∂F(t, z)/∂t` holding `z` fixed, propagated analytically through the
    /// stack: each layer contributes its gate derivative plus the transport
    /// of the incoming derivative through its state Jacobian.
    pub fn time_derivative(&self, t: f64, z: &Tensor) -> Result<Tensor> {
        self.check_dim(z, "flow time derivative")?;
        let (_, deriv) = self.value_and_derivative_slice(t, z.data());
        Ok(Tensor::vector(deriv))
    }

    pub(crate) fn value_and_derivative_slice(&self, t: f64, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut state = z.to_vec();
        let mut deriv = vec![0.0; z.len()];
        for layer in &self.layers {
            let (s, d) = layer.forward_with_derivative(t, &state, &deriv);
            state = s;
            deriv = d;
        }
        (state, deriv)
    }

    /// `(∂F/∂z)·w` through the stack.
    pub fn jvp_state(&self, t: f64, z: &[f64], w: &[f64]) -> Vec<f64> {
        let mut state = z.to_vec();
        let mut tangent = w.to_vec();
        for layer in &self.layers {
            tangent = layer.jvp_state(t, &state, &tangent);
            state = layer.forward(t, &state);
        }
        tangent
    }

    /// `log|det ∂F(t,z)/∂z|`: the sum of per-layer log-dets evaluated along
    /// the composition.
    pub fn log_det_jacobian(&self, t: f64, z: &Tensor) -> Result<f64> {
        self.check_dim(z, "flow log-det")?;
        let mut state = z.data().to_vec();
        let mut total = 0.0;
        for layer in &self.layers {
            total += layer.log_det_jacobian(t, &state)?;
            state = layer.forward(t, &state);
        }
        Ok(total)
    }

    /// VJP of `z ↦ F(t, z)` w.r.t. parameters (and state, returned).
    pub fn backprop_value(&self, t: f64, z: &[f64], cot: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.param_count());
        // Forward, storing layer inputs.
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut state = z.to_vec();
        for layer in &self.layers {
            inputs.push(state.clone());
            state = layer.forward(t, &state);
        }
        // Reverse.
        let offsets = self.layer_offsets();
        let mut c = cot.to_vec();
        for i in (0..self.layers.len()).rev() {
            let span = offsets[i]..offsets[i] + self.layers[i].param_count();
            c = self.layers[i].backprop_value(t, &inputs[i], &c, &mut grad[span]);
        }
        c
    }

    /// VJP of `z ↦ (F(t,z), ∂F/∂t(t,z))` w.r.t. parameters. `c_val` may be
    /// empty when only the time derivative feeds the loss.
    pub fn backprop_derivative(
        &self,
        t: f64,
        z: &[f64],
        c_val: &[f64],
        c_dot: &[f64],
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(grad.len(), self.param_count());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut state = z.to_vec();
        let mut deriv = vec![0.0; z.len()];
        for layer in &self.layers {
            inputs.push((state.clone(), deriv.clone()));
            let (s, d) = layer.forward_with_derivative(t, &state, &deriv);
            state = s;
            deriv = d;
        }
        let offsets = self.layer_offsets();
        let mut cv = if c_val.is_empty() {
            vec![0.0; self.dim]
        } else {
            c_val.to_vec()
        };
        let mut cd = c_dot.to_vec();
        for i in (0..self.layers.len()).rev() {
            let span = offsets[i]..offsets[i] + self.layers[i].param_count();
            let (ncv, ncd) = self.layers[i].backprop_derivative(
                t,
                &inputs[i].0,
                &inputs[i].1,
                &cv,
                &cd,
                &mut grad[span],
            );
            cv = ncv;
            cd = ncd;
        }
        (cv, cd)
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        offsets
    }
}

impl Params for FlowModule {
    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            layer.pack_into(out);
        }
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        for layer in &mut self.layers {
            layer.unpack_from(reader);
        }
    }
}
