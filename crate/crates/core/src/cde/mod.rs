//! The controlled-ODE predictor: embedding, vector field, Euler forward
//! solve over a control path, classifier head, and two gradient engines.
//!
//! The hidden state follows `ż(t) = f(t, z(t); θ_f) · Φ̇(t)` with
//! `z(0) = h(Φ(0))`; classification reads `z(1)` through a linear head.
//! `discrete_backprop` reverses the Euler recursion exactly (the gradient of
//! the discretized loss, checkable against finite differences), while
//! `adjoint_backward` integrates the continuous adjoint equation backward on
//! the same grid and recovers the same gradients up to `O(Δs)`.

mod adjoint;
mod loss;
mod model;
mod solver;

pub use adjoint::{adjoint_backward, integrate_adjoint};
pub use loss::{cross_entropy_loss, cross_entropy_with_grad, softmax};
pub use model::{CdeModel, GradientBundle, ModelConfig, PathSpec, VectorField};
pub use solver::{euler_integrate, euler_solve, Trajectory};
