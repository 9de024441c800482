use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A vector field `R^d → R^d` exposing an analytic directional derivative.
pub trait DifferentiableField {
    fn dim(&self) -> usize;
    fn eval(&self, z: &[f64]) -> Vec<f64>;
    /// `(∂field/∂z)·tangent` at `z`.
    fn jvp(&self, z: &[f64], tangent: &[f64]) -> Vec<f64>;
}

/// Stochastic divergence estimate `E[εᵀ(∂field/∂z)ε]` with Rademacher
/// probes. Returns the sample mean and its standard error
/// (sample standard deviation over √probes).
pub fn hutchinson_divergence(
    field: &dyn DifferentiableField,
    z: &[f64],
    probes: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(probes >= 1, "at least one probe required");
    let d = field.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(probes);
    let mut eps = vec![0.0; d];
    for _ in 0..probes {
        for e in eps.iter_mut() {
            *e = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let jv = field.jvp(z, &eps);
        samples.push(crate::linalg::dot(&eps, &jv));
    }
    let mean = samples.iter().sum::<f64>() / probes as f64;
    let std_error = if probes > 1 {
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / (probes as f64 - 1.0);
        (var / probes as f64).sqrt()
    } else {
        0.0
    };
    (mean, std_error)
}

/// Exact divergence: trace of the Jacobian assembled from `d` basis JVPs.
pub fn exact_divergence(field: &dyn DifferentiableField, z: &[f64]) -> f64 {
    let d = field.dim();
    let mut basis = vec![0.0; d];
    let mut trace = 0.0;
    for i in 0..d {
        basis[i] = 1.0;
        trace += field.jvp(z, &basis)[i];
        basis[i] = 0.0;
    }
    trace
}

/// Dense Jacobian of the field at `z`, row-major `d × d`, one basis JVP per
/// column.
pub fn dense_jacobian(field: &dyn DifferentiableField, z: &[f64]) -> Vec<f64> {
    let d = field.dim();
    let mut jac = vec![0.0; d * d];
    let mut basis = vec![0.0; d];
    for col in 0..d {
        basis[col] = 1.0;
        let jcol = field.jvp(z, &basis);
        basis[col] = 0.0;
        for row in 0..d {
            jac[row * d + col] = jcol[row];
        }
    }
    jac
}
