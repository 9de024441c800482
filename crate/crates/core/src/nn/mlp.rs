use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::{LinearLayer, SnReport};
use super::params::{ParamReader, ParamVector, Params};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Nonlinearity applied after the last layer. Hidden layers are always tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

impl OutputActivation {
    fn apply(self, s: f64) -> f64 {
        match self {
            OutputActivation::Identity => s,
            OutputActivation::Tanh => s.tanh(),
            OutputActivation::Sigmoid => 1.0 / (1.0 + (-s).exp()),
        }
    }

    /// First derivative expressed through the post-activation value.
    fn d1(self, a: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Tanh => 1.0 - a * a,
            OutputActivation::Sigmoid => a * (1.0 - a),
        }
    }

    /// Second derivative expressed through the post-activation value.
    fn d2(self, a: f64) -> f64 {
        match self {
            OutputActivation::Identity => 0.0,
            OutputActivation::Tanh => -2.0 * a * (1.0 - a * a),
            OutputActivation::Sigmoid => a * (1.0 - a) * (1.0 - 2.0 * a),
        }
    }
}

/// Multi-layer perceptron: tanh between layers, configurable output
/// nonlinearity, optional spectral caps on every layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<LinearLayer>,
    output: OutputActivation,
}

impl Mlp {
    /// Builds layers `dims[0] → dims[1] → … → dims[last]`.
    ///
    /// When `sn_cap` is given every layer carries a spectral cap and is
    /// normalized with 50 power iterations right away.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        output: OutputActivation,
        sn_cap: Option<f64>,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .map(|w| LinearLayer::new(w[0], w[1], sn_cap, rng))
            .collect();
        let mut net = Self { layers, output };
        if sn_cap.is_some() {
            for layer in &mut net.layers {
                layer.spectral_normalize_converged(50, 20);
            }
        }
        net
    }

    pub fn from_layers(layers: Vec<LinearLayer>, output: OutputActivation) -> Self {
        assert!(!layers.is_empty());
        for pair in layers.windows(2) {
            assert_eq!(
                pair[0].out_dim(),
                pair[1].in_dim(),
                "layer widths must chain"
            );
        }
        Self { layers, output }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    /// Re-projects every capped layer; returns one report per capped layer.
    pub fn spectral_normalize_all(&mut self, power_iters: usize) -> Vec<SnReport> {
        self.layers
            .iter_mut()
            .filter(|l| l.is_capped())
            .map(|l| l.spectral_normalize(power_iters))
            .collect()
    }

    /// Product of the layers' spectral caps: an upper bound on the network's
    /// Lipschitz constant as long as every layer is capped (tanh and the
    /// output nonlinearities are all 1-Lipschitz).
    pub fn lipschitz_cap(&self) -> Option<f64> {
        self.layers.iter().map(|l| l.sn_cap()).product()
    }

    fn check_input(&self, input: &Tensor, context: &'static str) -> Result<()> {
        if input.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("input width {}", self.in_dim()),
                got: format!("{}", input.len()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input, "mlp forward")?;
        Ok(Tensor::vector(self.eval(input.data())))
    }

    /// Unchecked forward pass over raw slices.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            next.resize(layer.out_dim(), 0.0);
            layer.apply(&a, &mut next);
            let act = if i < last {
                OutputActivation::Tanh
            } else {
                self.output
            };
            if act != OutputActivation::Identity {
                for v in next.iter_mut() {
                    *v = act.apply(*v);
                }
            }
            std::mem::swap(&mut a, &mut next);
        }
        a
    }

    /// Post-activation values of every layer: `acts[0] = x`, …,
    /// `acts[L] = output`.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim()];
            layer.apply(acts.last().unwrap(), &mut next);
            let act = if i < last {
                OutputActivation::Tanh
            } else {
                self.output
            };
            if act != OutputActivation::Identity {
                for v in next.iter_mut() {
                    *v = act.apply(*v);
                }
            }
            acts.push(next);
        }
        acts
    }

    fn layer_activation(&self, i: usize) -> OutputActivation {
        if i + 1 < self.layers.len() {
            OutputActivation::Tanh
        } else {
            self.output
        }
    }

    /// Reverse-mode pass: returns `cotangentᵀ·∂out/∂input` and accumulates
    /// `cotangentᵀ·∂out/∂θ` into `param_grad` (pack order, full length).
    pub fn vjp(&self, input: &Tensor, cotangent: &Tensor) -> Result<(Tensor, ParamVector)> {
        self.check_input(input, "mlp vjp")?;
        if cotangent.len() != self.out_dim() {
            return Err(Error::ShapeMismatch {
                context: "mlp vjp",
                expected: format!("cotangent width {}", self.out_dim()),
                got: format!("{}", cotangent.len()),
            });
        }
        let mut grad = ParamVector::zeros(self.param_count());
        let input_grad = self.vjp_slice(input.data(), cotangent.data(), grad.as_mut_slice());
        Ok((Tensor::vector(input_grad), grad))
    }

    /// Unchecked VJP over raw slices; `param_grad` is accumulated into.
    pub fn vjp_slice(&self, x: &[f64], cotangent: &[f64], param_grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(param_grad.len(), self.param_count());
        let acts = self.trace(x);
        let offsets = self.layer_offsets();
        let mut delta = cotangent.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = self.layer_activation(i);
            if act != OutputActivation::Identity {
                for (d, a) in delta.iter_mut().zip(&acts[i + 1]) {
                    *d *= act.d1(*a);
                }
            }
            // delta is now the cotangent of the pre-activation s_i.
            let (w_grad, b_grad) = split_layer_grad(param_grad, offsets[i], layer);
            accumulate_outer(w_grad, &delta, &acts[i]);
            crate::linalg::axpy(1.0, &delta, b_grad);
            let mut prev = vec![0.0; layer.in_dim()];
            layer.apply_transpose(&delta, &mut prev);
            delta = prev;
        }
        delta
    }

    pub fn jvp(&self, input: &Tensor, tangent: &Tensor) -> Result<Tensor> {
        self.check_input(input, "mlp jvp")?;
        if tangent.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                context: "mlp jvp",
                expected: format!("tangent width {}", self.in_dim()),
                got: format!("{}", tangent.len()),
            });
        }
        Ok(Tensor::vector(self.jvp_slice(input.data(), tangent.data())))
    }

    /// Forward-mode directional derivative `(∂out/∂input)·tangent`.
    pub fn jvp_slice(&self, x: &[f64], tangent: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        let mut u = tangent.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut s = vec![0.0; layer.out_dim()];
            let mut t = vec![0.0; layer.out_dim()];
            layer.apply(&a, &mut s);
            layer.apply_linear(&u, &mut t);
            let act = if i < last {
                OutputActivation::Tanh
            } else {
                self.output
            };
            if act == OutputActivation::Identity {
                a = s;
                u = t;
            } else {
                a = s.iter().map(|&v| act.apply(v)).collect();
                u = t
                    .iter()
                    .zip(&a)
                    .map(|(&tv, &av)| tv * act.d1(av))
                    .collect();
            }
        }
        u
    }

    /// Fused reverse pass through the pair `(y, ẏ) = (net(x), J_net(x)·u)`.
    ///
    /// Given cotangents `c_val` on `y` (optional) and `c_dot` on `ẏ`,
    /// accumulates parameter gradients (which involve second derivatives of
    /// the activations) and returns the cotangents on `x` and `u`. This is
    /// what backpropagation through an analytic time derivative needs.
    pub fn vjp_pair(
        &self,
        x: &[f64],
        u: &[f64],
        c_val: Option<&[f64]>,
        c_dot: &[f64],
        param_grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim());
        debug_assert_eq!(u.len(), self.in_dim());
        debug_assert_eq!(c_dot.len(), self.out_dim());
        debug_assert_eq!(param_grad.len(), self.param_count());
        let last = self.layers.len() - 1;

        // Forward, storing post-activations a, tangents (post) ut, and the
        // raw tangent pre-activations t (needed by the σ'' term).
        let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut tangents: Vec<Vec<f64>> = vec![u.to_vec()];
        let mut pre_tangents: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut s = vec![0.0; layer.out_dim()];
            let mut t = vec![0.0; layer.out_dim()];
            layer.apply(acts.last().unwrap(), &mut s);
            layer.apply_linear(tangents.last().unwrap(), &mut t);
            let act = if i < last {
                OutputActivation::Tanh
            } else {
                self.output
            };
            pre_tangents.push(t.clone());
            if act == OutputActivation::Identity {
                acts.push(s);
                tangents.push(t);
            } else {
                let a: Vec<f64> = s.iter().map(|&v| act.apply(v)).collect();
                let ut: Vec<f64> = t
                    .iter()
                    .zip(&a)
                    .map(|(&tv, &av)| tv * act.d1(av))
                    .collect();
                acts.push(a);
                tangents.push(ut);
            }
        }

        // Reverse.
        let offsets = self.layer_offsets();
        let mut a_bar = match c_val {
            Some(c) => c.to_vec(),
            None => vec![0.0; self.out_dim()],
        };
        let mut u_bar = c_dot.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = self.layer_activation(i);
            let (s_bar, t_bar) = if act == OutputActivation::Identity {
                (a_bar.clone(), u_bar.clone())
            } else {
                let a = &acts[i + 1];
                let t = &pre_tangents[i];
                let mut s_bar = vec![0.0; layer.out_dim()];
                let mut t_bar = vec![0.0; layer.out_dim()];
                for j in 0..layer.out_dim() {
                    let d1 = act.d1(a[j]);
                    let d2 = act.d2(a[j]);
                    s_bar[j] = a_bar[j] * d1 + u_bar[j] * d2 * t[j];
                    t_bar[j] = u_bar[j] * d1;
                }
                (s_bar, t_bar)
            };
            let (w_grad, b_grad) = split_layer_grad(param_grad, offsets[i], layer);
            accumulate_outer(w_grad, &s_bar, &acts[i]);
            accumulate_outer(w_grad, &t_bar, &tangents[i]);
            crate::linalg::axpy(1.0, &s_bar, b_grad);
            let mut a_prev = vec![0.0; layer.in_dim()];
            let mut u_prev = vec![0.0; layer.in_dim()];
            layer.apply_transpose(&s_bar, &mut a_prev);
            layer.apply_transpose(&t_bar, &mut u_prev);
            a_bar = a_prev;
            u_bar = u_prev;
        }
        (a_bar, u_bar)
    }

    /// Start offset of each layer's block in the packed parameter vector.
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

fn split_layer_grad<'a>(
    param_grad: &'a mut [f64],
    offset: usize,
    layer: &LinearLayer,
) -> (&'a mut [f64], &'a mut [f64]) {
    let w_len = layer.in_dim() * layer.out_dim();
    let block = &mut param_grad[offset..offset + layer.param_count()];
    block.split_at_mut(w_len)
}

/// `w_grad += delta ⊗ input` (row-major out×in).
fn accumulate_outer(w_grad: &mut [f64], delta: &[f64], input: &[f64]) {
    let cols = input.len();
    for (r, d) in delta.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let row = &mut w_grad[r * cols..(r + 1) * cols];
        for (g, x) in row.iter_mut().zip(input) {
            *g += d * x;
        }
    }
}

impl Params for Mlp {
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
