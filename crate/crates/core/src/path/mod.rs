//! Control-path construction: turn one (preprocessed) observation grid into
//! a continuously evaluable path `Φ(t)` with derivative `Φ̇(t)`.
//!
//! Four constructions share the interface: piecewise-linear and natural
//! cubic-spline interpolation (the fixed baselines), an unconstrained
//! network path (the non-invertible ablation), and the invertible flow path.
//! Learned paths borrow their parameters from the owning model; gradients of
//! `Φ̇` with respect to those parameters flow through
//! [`ControlPath::deriv_vjp`].

mod grid;
mod interp;

pub use grid::ObservationGrid;
pub use interp::{Knots, LinearPath, SplinePath};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::FlowModule;
use crate::nn::{Mlp, ParamReader, Params};

/// How the flow path conditions on observations.
///
/// `Global` applies the flow to the earliest completed observation for the
/// whole horizon: `Φ(t) = F(t, x(0))`. `Anchored` restarts the flow at every
/// observation: `Φ(t) = F(t − t_k, x(t_k))` with `t_k` the latest
/// observation time ≤ t, so the path passes through every observed point by
/// the identity-at-zero property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMode {
    Global,
    Anchored,
}

/// Parameter owner for path construction; builds one [`ControlPath`] per
/// sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PathBuilder {
    Linear,
    CubicSpline,
    /// `Φ(t) = x(0) + t·net(t, x(0))`: anchored at zero like the flow path,
    /// but with no invertibility constraint.
    Mlp(Mlp),
    Flow { flow: FlowModule, anchor: AnchorMode },
}

impl PathBuilder {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PathBuilder::Linear => "linear",
            PathBuilder::CubicSpline => "cubic_spline",
            PathBuilder::Mlp(_) => "mlp_path",
            PathBuilder::Flow { .. } => "flowpath",
        }
    }

    /// Builds the path for one completed grid. The returned path borrows
    /// this builder's learnable components.
    pub fn build<'m>(&'m self, grid: &ObservationGrid) -> Result<ControlPath<'m>> {
        debug_assert!(grid.is_complete(), "build paths on preprocessed grids");
        let knots = Knots::from_grid(grid);
        Ok(match self {
            PathBuilder::Linear => ControlPath::Linear(LinearPath::new(grid)),
            PathBuilder::CubicSpline => {
                if grid.num_obs() >= 3 {
                    ControlPath::Spline(SplinePath::new(grid)?)
                } else {
                    // Too few knots for a cubic: fall back to linear.
                    ControlPath::Linear(LinearPath::new(grid))
                }
            }
            PathBuilder::Mlp(net) => ControlPath::MlpPath {
                net,
                x0: knots.values[..knots.channels].to_vec(),
            },
            PathBuilder::Flow { flow, anchor } => ControlPath::FlowPath {
                flow,
                anchor: *anchor,
                knots,
            },
        })
    }

    pub fn flow(&self) -> Option<&FlowModule> {
        match self {
            PathBuilder::Flow { flow, .. } => Some(flow),
            _ => None,
        }
    }

    /// Re-projects spectral caps after an optimizer step (flow paths only).
    pub fn spectral_normalize_all(&mut self, power_iters: usize) {
        if let PathBuilder::Flow { flow, .. } = self {
            flow.spectral_normalize_all(power_iters);
        }
    }
}

impl Params for PathBuilder {
    fn param_count(&self) -> usize {
        match self {
            PathBuilder::Linear | PathBuilder::CubicSpline => 0,
            PathBuilder::Mlp(net) => net.param_count(),
            PathBuilder::Flow { flow, .. } => flow.param_count(),
        }
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        match self {
            PathBuilder::Linear | PathBuilder::CubicSpline => {}
            PathBuilder::Mlp(net) => net.pack_into(out),
            PathBuilder::Flow { flow, .. } => flow.pack_into(out),
        }
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        match self {
            PathBuilder::Linear | PathBuilder::CubicSpline => {}
            PathBuilder::Mlp(net) => net.unpack_from(reader),
            PathBuilder::Flow { flow, .. } => flow.unpack_from(reader),
        }
    }
}

/// A continuously evaluable control path on `[0, 1]`.
#[derive(Debug, Clone)]
pub enum ControlPath<'m> {
    Linear(LinearPath),
    Spline(SplinePath),
    MlpPath { net: &'m Mlp, x0: Vec<f64> },
    FlowPath {
        flow: &'m FlowModule,
        anchor: AnchorMode,
        knots: Knots,
    },
}

impl ControlPath<'_> {
    pub fn channels(&self) -> usize {
        match self {
            ControlPath::Linear(p) => p.knots.channels,
            ControlPath::Spline(p) => p.knots().channels,
            ControlPath::MlpPath { x0, .. } => x0.len(),
            ControlPath::FlowPath { knots, .. } => knots.channels,
        }
    }

    fn clamp(t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            log::warn!("path queried outside [0, 1] at t = {t}; clamping");
            t.clamp(0.0, 1.0)
        } else {
            t
        }
    }

    /// Anchor for the learned paths: (offset into the flow's time argument,
    /// anchor state).
    fn flow_anchor<'k>(knots: &'k Knots, anchor: AnchorMode, t: f64) -> (f64, &'k [f64]) {
        match anchor {
            AnchorMode::Global => (t, &knots.values[..knots.channels]),
            AnchorMode::Anchored => {
                let k = knots.anchor(t);
                let row = &knots.values[k * knots.channels..(k + 1) * knots.channels];
                (t - knots.times[k], row)
            }
        }
    }

    /// `Φ(t)`
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let t = Self::clamp(t);
        match self {
            ControlPath::Linear(p) => p.eval(t),
            ControlPath::Spline(p) => p.eval(t),
            ControlPath::MlpPath { net, x0 } => {
                let out = net.eval(&input_with_time(t, x0));
                x0.iter().zip(out).map(|(a, b)| a + t * b).collect()
            }
            ControlPath::FlowPath {
                flow,
                anchor,
                knots,
            } => {
                let (dt, x) = Self::flow_anchor(knots, *anchor, t);
                flow.forward_slice(dt, x)
                    .expect("flow produced non-finite path value")
            }
        }
    }

    /// `Φ̇(t)`; at anchor switches of the anchored flow path this is the
    /// right-sided derivative, matching the left-endpoint sampling of the
    /// Euler solver.
    pub fn deriv(&self, t: f64) -> Vec<f64> {
        let t = Self::clamp(t);
        match self {
            ControlPath::Linear(p) => p.deriv(t),
            ControlPath::Spline(p) => p.deriv(t),
            ControlPath::MlpPath { net, x0 } => {
                let x = input_with_time(t, x0);
                let out = net.eval(&x);
                let mut tangent = vec![0.0; x.len()];
                tangent[0] = 1.0;
                let ddt = net.jvp_slice(&x, &tangent);
                // d/dt [x0 + t·net(t, x0)] = net + t·∂net/∂t
                out.iter().zip(ddt).map(|(o, d)| o + t * d).collect()
            }
            ControlPath::FlowPath {
                flow,
                anchor,
                knots,
            } => {
                let (dt, x) = Self::flow_anchor(knots, *anchor, t);
                flow.value_and_derivative_slice(dt, x).1
            }
        }
    }

    /// Accumulates `cotangentᵀ·∂Φ̇(t)/∂θ` into `grad` (the path builder's
    /// parameter block; no-op for the interpolating kinds).
    pub fn deriv_vjp(&self, t: f64, cotangent: &[f64], grad: &mut [f64]) {
        let t = Self::clamp(t);
        match self {
            ControlPath::Linear(_) | ControlPath::Spline(_) => {}
            ControlPath::MlpPath { net, x0 } => {
                let x = input_with_time(t, x0);
                let mut tangent = vec![0.0; x.len()];
                tangent[0] = 1.0;
                // Φ̇ = net(x) + t·(J_net·e_t): cotangent lands on both the
                // value and the directional-derivative outputs.
                let c_dot: Vec<f64> = cotangent.iter().map(|c| c * t).collect();
                net.vjp_pair(&x, &tangent, Some(cotangent), &c_dot, grad);
            }
            ControlPath::FlowPath {
                flow,
                anchor,
                knots,
            } => {
                let (dt, x) = Self::flow_anchor(knots, *anchor, t);
                flow.backprop_derivative(dt, x, &[], cotangent, grad);
            }
        }
    }
}

fn input_with_time(t: f64, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.push(t);
    out.extend_from_slice(x);
    out
}
