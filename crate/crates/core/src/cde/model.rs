use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowKind, FlowModule};
use crate::nn::{Mlp, OutputActivation, ParamReader, ParamVector, Params, Tensor};
use crate::path::{AnchorMode, ControlPath, ObservationGrid, PathBuilder};

use super::loss::cross_entropy_with_grad;
use super::solver::{euler_solve, Trajectory};

/// The CDE vector field `f(t, z; θ_f)`: a capped tanh MLP whose output is
/// reshaped to a `d_z × d_in` matrix acting on `Φ̇(t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorField {
    net: Mlp,
    d_z: usize,
    d_in: usize,
}

impl VectorField {
    pub fn new<R: Rng + ?Sized>(
        d_z: usize,
        d_in: usize,
        hidden: &[usize],
        sn_cap: f64,
        rng: &mut R,
    ) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(1 + d_z);
        dims.extend_from_slice(hidden);
        dims.push(d_z * d_in);
        Self {
            net: Mlp::new(&dims, OutputActivation::Tanh, Some(sn_cap), rng),
            d_z,
            d_in,
        }
    }

    /// Wraps an existing network (used by test systems that need exact
    /// fields without the bounded output nonlinearity).
    pub fn from_net(net: Mlp, d_z: usize, d_in: usize) -> Self {
        assert_eq!(net.in_dim(), 1 + d_z);
        assert_eq!(net.out_dim(), d_z * d_in);
        Self { net, d_z, d_in }
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn input(&self, t: f64, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.d_z);
        let mut x = Vec::with_capacity(1 + self.d_z);
        x.push(t);
        x.extend_from_slice(z);
        x
    }

    /// Row-major `d_z × d_in` field matrix at `(t, z)`.
    pub fn eval_matrix(&self, t: f64, z: &[f64]) -> Vec<f64> {
        self.net.eval(&self.input(t, z))
    }

    /// `f(t, z)·Φ̇` — the hidden-state velocity.
    pub fn apply(&self, t: f64, z: &[f64], phidot: &[f64]) -> Vec<f64> {
        debug_assert_eq!(phidot.len(), self.d_in);
        let m = self.eval_matrix(t, z);
        (0..self.d_z)
            .map(|r| crate::linalg::dot(&m[r * self.d_in..(r + 1) * self.d_in], phidot))
            .collect()
    }

    /// `∂/∂z[f(t,z)·Φ̇]·w`: directional state derivative of the velocity.
    pub fn jvp_state(&self, t: f64, z: &[f64], phidot: &[f64], w: &[f64]) -> Vec<f64> {
        let x = self.input(t, z);
        let mut tangent = vec![0.0; x.len()];
        tangent[1..].copy_from_slice(w);
        let dm = self.net.jvp_slice(&x, &tangent);
        (0..self.d_z)
            .map(|r| crate::linalg::dot(&dm[r * self.d_in..(r + 1) * self.d_in], phidot))
            .collect()
    }

    /// VJP through `(z, θ_f, Φ̇) ↦ f(t,z)·Φ̇` for a cotangent on the
    /// velocity. Returns `(c_z, c_phidot)`; accumulates `θ_f` gradients when
    /// a buffer is supplied.
    pub fn vjp_dynamics(
        &self,
        t: f64,
        z: &[f64],
        phidot: &[f64],
        cot: &[f64],
        param_grad: Option<&mut [f64]>,
    ) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(cot.len(), self.d_z);
        let x = self.input(t, z);
        let m = self.net.eval(&x);
        // cotangent on the matrix: cot ⊗ Φ̇ (row-major)
        let mut c_m = vec![0.0; self.d_z * self.d_in];
        for r in 0..self.d_z {
            for c in 0..self.d_in {
                c_m[r * self.d_in + c] = cot[r] * phidot[c];
            }
        }
        let x_bar = match param_grad {
            Some(grad) => self.net.vjp_slice(&x, &c_m, grad),
            None => {
                let mut scratch = vec![0.0; self.net.param_count()];
                self.net.vjp_slice(&x, &c_m, &mut scratch)
            }
        };
        // cotangent on Φ̇: Mᵀ·cot
        let c_phidot = (0..self.d_in)
            .map(|c| (0..self.d_z).map(|r| m[r * self.d_in + c] * cot[r]).sum())
            .collect();
        (x_bar[1..].to_vec(), c_phidot)
    }

    pub fn spectral_normalize_all(&mut self, power_iters: usize) {
        self.net.spectral_normalize_all(power_iters);
    }
}

impl Params for VectorField {
    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        self.net.pack_into(out);
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        self.net.unpack_from(reader);
    }
}

/// Which path construction a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSpec {
    Linear,
    CubicSpline,
    MlpPath,
    FlowPath { kind: FlowKind, anchor: AnchorMode },
}

impl PathSpec {
    pub fn name(&self) -> String {
        match self {
            PathSpec::Linear => "linear".into(),
            PathSpec::CubicSpline => "cubic_spline".into(),
            PathSpec::MlpPath => "mlp_path".into(),
            PathSpec::FlowPath { kind, .. } => format!("flowpath_{kind}"),
        }
    }
}

/// Shape hyperparameters of one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_x: usize,
    pub d_z: usize,
    pub num_classes: usize,
    /// Width of hidden layers in the field/embedding networks.
    pub hidden: usize,
    /// Hidden-layer count of the vector field (the embedding uses one
    /// fewer, bottoming out at a single affine layer).
    pub n_layers: usize,
    /// Stack depth of the flow (flow paths only).
    pub flow_layers: usize,
    /// Hidden width inside each flow layer's sub-networks.
    pub flow_hidden: usize,
    pub sn_cap: f64,
    pub solver_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_x: 1,
            d_z: 16,
            num_classes: 2,
            hidden: 32,
            n_layers: 2,
            flow_layers: 2,
            flow_hidden: 32,
            sn_cap: 0.8,
            solver_steps: 64,
        }
    }
}

/// Per-component gradients of one loss evaluation, each in its component's
/// pack order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub embed: ParamVector,
    pub field: ParamVector,
    /// Path parameters: θ_F for flow paths, the path network for MLP paths,
    /// empty for the interpolating kinds.
    pub path: ParamVector,
    pub head: ParamVector,
}

impl GradientBundle {
    pub fn zeros_for(model: &CdeModel) -> Self {
        Self {
            embed: ParamVector::zeros(model.embed.param_count()),
            field: ParamVector::zeros(model.field.param_count()),
            path: ParamVector::zeros(model.path_builder.param_count()),
            head: ParamVector::zeros(model.head.param_count()),
        }
    }

    /// Concatenation in model pack order: embed, field, path, head.
    pub fn flatten(&self) -> ParamVector {
        let mut out =
            Vec::with_capacity(self.embed.len() + self.field.len() + self.path.len() + self.head.len());
        out.extend_from_slice(self.embed.as_slice());
        out.extend_from_slice(self.field.as_slice());
        out.extend_from_slice(self.path.as_slice());
        out.extend_from_slice(self.head.as_slice());
        ParamVector(out)
    }

    pub fn add(&mut self, other: &GradientBundle) {
        for (a, b) in [
            (&mut self.embed, &other.embed),
            (&mut self.field, &other.field),
            (&mut self.path, &other.path),
            (&mut self.head, &other.head),
        ] {
            crate::linalg::axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
    }

    pub fn scale(&mut self, s: f64) {
        for block in [&mut self.embed, &mut self.field, &mut self.path, &mut self.head] {
            for v in block.as_mut_slice() {
                *v *= s;
            }
        }
    }

    pub fn norm2(&self) -> f64 {
        self.flatten().norm2()
    }

    /// `‖a − b‖₂ / ‖b‖₂` over the flattened gradients.
    pub fn relative_l2_distance(a: &GradientBundle, b: &GradientBundle) -> f64 {
        let (fa, fb) = (a.flatten(), b.flatten());
        let diff: f64 = fa
            .as_slice()
            .iter()
            .zip(fb.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        diff / fb.norm2().max(1e-300)
    }
}

/// The full predictor: embedding, field, path construction, classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CdeModel {
    pub(crate) embed: Mlp,
    pub(crate) field: VectorField,
    pub(crate) path_builder: PathBuilder,
    pub(crate) head: Mlp,
    pub d_x: usize,
    pub d_z: usize,
    pub num_classes: usize,
    pub solver_steps: usize,
}

impl CdeModel {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, path: PathSpec, rng: &mut R) -> Self {
        let d_in = cfg.d_x + 1;
        let mut embed_dims = vec![d_in];
        for _ in 1..cfg.n_layers {
            embed_dims.push(cfg.hidden);
        }
        embed_dims.push(cfg.d_z);
        let embed = Mlp::new(&embed_dims, OutputActivation::Identity, None, rng);

        let field_hidden = vec![cfg.hidden; cfg.n_layers];
        let field = VectorField::new(cfg.d_z, d_in, &field_hidden, cfg.sn_cap, rng);

        let path_builder = match path {
            PathSpec::Linear => PathBuilder::Linear,
            PathSpec::CubicSpline => PathBuilder::CubicSpline,
            PathSpec::MlpPath => {
                let mut dims = vec![1 + d_in];
                for _ in 0..cfg.n_layers {
                    dims.push(cfg.hidden);
                }
                dims.push(d_in);
                PathBuilder::Mlp(Mlp::new(&dims, OutputActivation::Identity, None, rng))
            }
            PathSpec::FlowPath { kind, anchor } => PathBuilder::Flow {
                flow: FlowModule::new(
                    kind,
                    d_in,
                    cfg.flow_layers,
                    &[cfg.flow_hidden],
                    cfg.sn_cap,
                    rng,
                ),
                anchor,
            },
        };

        let head = Mlp::new(&[cfg.d_z, cfg.num_classes], OutputActivation::Identity, None, rng);

        Self {
            embed,
            field,
            path_builder,
            head,
            d_x: cfg.d_x,
            d_z: cfg.d_z,
            num_classes: cfg.num_classes,
            solver_steps: cfg.solver_steps,
        }
    }

    pub fn from_parts(
        embed: Mlp,
        field: VectorField,
        path_builder: PathBuilder,
        head: Mlp,
        solver_steps: usize,
    ) -> Self {
        let d_z = field.d_z();
        let d_x = field.d_in() - 1;
        let num_classes = head.out_dim();
        Self {
            embed,
            field,
            path_builder,
            head,
            d_x,
            d_z,
            num_classes,
            solver_steps,
        }
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn path_builder(&self) -> &PathBuilder {
        &self.path_builder
    }

    pub fn path_builder_mut(&mut self) -> &mut PathBuilder {
        &mut self.path_builder
    }

    pub fn path_kind_name(&self) -> &'static str {
        self.path_builder.kind_name()
    }

    /// Projects every spectrally capped layer back under its cap; called
    /// after each optimizer step.
    pub fn spectral_normalize_all(&mut self, power_iters: usize) {
        self.field.spectral_normalize_all(power_iters);
        self.path_builder.spectral_normalize_all(power_iters);
    }

    fn check_grid(&self, grid: &ObservationGrid) -> Result<()> {
        if grid.channels() != self.d_x + 1 {
            return Err(Error::ShapeMismatch {
                context: "model forward",
                expected: format!("{} channels (preprocessed)", self.d_x + 1),
                got: format!("{}", grid.channels()),
            });
        }
        if !grid.is_complete() {
            return Err(Error::InvalidInput(
                "model requires a preprocessed (completed) observation grid".into(),
            ));
        }
        Ok(())
    }

    pub fn build_path(&self, grid: &ObservationGrid) -> Result<ControlPath<'_>> {
        self.check_grid(grid)?;
        self.path_builder.build(grid)
    }

    /// Forward pass at the model's configured step count: logits and the
    /// solver trajectory.
    pub fn forward_classify(&self, grid: &ObservationGrid) -> Result<(Tensor, Trajectory)> {
        self.forward_classify_steps(grid, self.solver_steps)
    }

    pub fn forward_classify_steps(
        &self,
        grid: &ObservationGrid,
        steps: usize,
    ) -> Result<(Tensor, Trajectory)> {
        let path = self.build_path(grid)?;
        let z0 = self.embed.eval(&path.eval(0.0));
        let trajectory = euler_solve(&self.field, &path, &z0, steps)?;
        let logits = self.head.eval(trajectory.final_state());
        Ok((Tensor::vector(logits), trajectory))
    }

    pub fn loss(&self, grid: &ObservationGrid, label: usize) -> Result<f64> {
        let (logits, _) = self.forward_classify(grid)?;
        Ok(super::loss::cross_entropy_loss(logits.data(), label))
    }

    /// Exact gradient of the Euler-discretized loss: a reverse sweep through
    /// the stored trajectory, through the path derivative into the path
    /// parameters, and through the embedding and head.
    pub fn discrete_backprop(
        &self,
        grid: &ObservationGrid,
        label: usize,
    ) -> Result<(f64, GradientBundle)> {
        self.discrete_backprop_steps(grid, label, self.solver_steps)
    }

    pub fn discrete_backprop_steps(
        &self,
        grid: &ObservationGrid,
        label: usize,
        steps: usize,
    ) -> Result<(f64, GradientBundle)> {
        let path = self.build_path(grid)?;
        let phi0 = path.eval(0.0);
        let z0 = self.embed.eval(&phi0);
        let trajectory = euler_solve(&self.field, &path, &z0, steps)?;
        let ds = 1.0 / steps as f64;

        let logits = self.head.eval(trajectory.final_state());
        let (loss, dlogits) = cross_entropy_with_grad(&logits, label);

        let mut grads = GradientBundle::zeros_for(self);

        // Head.
        let mut c_state = self.head.vjp_slice(
            trajectory.final_state(),
            &dlogits,
            grads.head.as_mut_slice(),
        );

        // Reverse Euler sweep: z_{k+1} = z_k + Δs·f(s_k, z_k)·Φ̇(s_k).
        for k in (0..steps).rev() {
            let s = k as f64 * ds;
            let z_k = &trajectory.states[k];
            let phidot = path.deriv(s);
            let scaled: Vec<f64> = c_state.iter().map(|c| c * ds).collect();
            let (c_z, c_phidot) =
                self.field
                    .vjp_dynamics(s, z_k, &phidot, &scaled, Some(grads.field.as_mut_slice()));
            path.deriv_vjp(s, &c_phidot, grads.path.as_mut_slice());
            for (cs, cz) in c_state.iter_mut().zip(&c_z) {
                *cs += cz;
            }
        }

        // Embedding; Φ(0) is identically the completed first observation for
        // every path kind, so nothing flows into the path parameters here.
        self.embed
            .vjp_slice(&phi0, &c_state, grads.embed.as_mut_slice());

        Ok((loss, grads))
    }
}

impl Params for CdeModel {
    fn param_count(&self) -> usize {
        self.embed.param_count()
            + self.field.param_count()
            + self.path_builder.param_count()
            + self.head.param_count()
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        self.embed.pack_into(out);
        self.field.pack_into(out);
        self.path_builder.pack_into(out);
        self.head.pack_into(out);
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        self.embed.unpack_from(reader);
        self.field.unpack_from(reader);
        self.path_builder.unpack_from(reader);
        self.head.unpack_from(reader);
    }
}
