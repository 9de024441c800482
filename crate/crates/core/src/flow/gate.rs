use serde::{Deserialize, Serialize};

use crate::nn::{ParamReader, Params};

/// Learnable time gate `φ(t) = tanh(α·t)` with `α > 0`.
///
/// `φ(0) = 0` exactly and `|φ(t)| < 1` everywhere, which is what makes every
/// flow layer the identity at `t = 0` and keeps the residual increments
/// contractive. The positivity constraint on `α` is enforced by a softplus
/// reparameterization: the learnable scalar is `raw` with
/// `α = ln(1 + e^raw)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeGate {
    raw: f64,
}

impl TimeGate {
    /// Gate with `α = 1`.
    pub fn unit() -> Self {
        Self {
            raw: (std::f64::consts::E - 1.0).ln(),
        }
    }

    pub fn with_alpha(alpha: f64) -> Self {
        assert!(alpha > 0.0);
        // Inverse softplus.
        Self {
            raw: (alpha.exp() - 1.0).ln(),
        }
    }

    pub fn alpha(&self) -> f64 {
        softplus(self.raw)
    }

    pub fn phi(&self, t: f64) -> f64 {
        (self.alpha() * t).tanh()
    }

    /// `φ′(t) = α·(1 − tanh²(α·t))`
    pub fn phi_dot(&self, t: f64) -> f64 {
        let a = self.alpha();
        let th = (a * t).tanh();
        a * (1.0 - th * th)
    }

    /// Gradient of `c_phi·φ(t) + c_phi_dot·φ′(t)` with respect to `raw`.
    pub fn grad_raw(&self, t: f64, c_phi: f64, c_phi_dot: f64) -> f64 {
        let a = self.alpha();
        let th = (a * t).tanh();
        let sech2 = 1.0 - th * th;
        // ∂φ/∂α = t·sech²(αt)
        let dphi_da = t * sech2;
        // ∂φ′/∂α = sech²(αt)·(1 − 2αt·tanh(αt))
        let dphidot_da = sech2 * (1.0 - 2.0 * a * t * th);
        let da_draw = sigmoid(self.raw);
        (c_phi * dphi_da + c_phi_dot * dphidot_da) * da_draw
    }
}

impl Params for TimeGate {
    fn param_count(&self) -> usize {
        1
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        out.push(self.raw);
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        self.raw = reader.take_one();
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_gate_has_alpha_one() {
        let g = TimeGate::unit();
        assert!((g.alpha() - 1.0).abs() < 1e-12);
        assert_eq!(g.phi(0.0), 0.0);
        assert!((g.phi_dot(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_stays_in_open_unit_interval() {
        // Over the time range paths actually use (anchor offsets in [-1, 1]).
        let g = TimeGate::with_alpha(3.0);
        for t in [-1.0, -0.5, 0.25, 0.5, 1.0] {
            assert!(g.phi(t).abs() < 1.0);
        }
    }

    #[test]
    fn grad_raw_matches_finite_differences() {
        let g = TimeGate::with_alpha(1.7);
        let t = 0.6;
        let (c_phi, c_phi_dot) = (0.8, -1.3);
        let eps = 1e-7;
        let value = |raw: f64| {
            let probe = TimeGate { raw };
            c_phi * probe.phi(t) + c_phi_dot * probe.phi_dot(t)
        };
        let fd = (value(g.raw + eps) - value(g.raw - eps)) / (2.0 * eps);
        let analytic = g.grad_raw(t, c_phi, c_phi_dot);
        assert!((fd - analytic).abs() < 1e-7, "fd {fd} vs {analytic}");
    }
}
