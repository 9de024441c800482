//! Minimal differentiable numerical kernel.
//!
//! Dense `f64` tensors, linear layers with optional spectral caps, tanh MLPs
//! with hand-rolled vector-Jacobian and Jacobian-vector products, flat
//! parameter packing, and a central finite-difference oracle. There is no
//! autodiff tape: every derivative in the crate is an explicit reverse or
//! forward pass written against these primitives, which is what makes them
//! checkable against [`fd::finite_difference_grad`] to tight tolerances.

mod fd;
mod linear;
mod mlp;
mod params;
mod tensor;

pub use fd::finite_difference_grad;
pub use linear::{LinearLayer, SnReport};
pub use mlp::{Mlp, OutputActivation};
pub use params::{pack, unpack, ParamReader, ParamVector, Params};
pub use tensor::Tensor;
