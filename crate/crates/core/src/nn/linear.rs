use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamReader, Params};

/// Persistent power-iteration state plus the Lipschitz cap of one layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralState {
    /// Cap κ ∈ (0, 1] on the layer's largest singular value.
    pub cap: f64,
    /// Left singular-vector estimate (length `out_dim`).
    u: Vec<f64>,
    /// Right singular-vector estimate (length `in_dim`).
    v: Vec<f64>,
}

/// Diagnostics from one spectral-normalization pass.
#[derive(Debug, Clone, Copy)]
pub struct SnReport {
    /// Power-iteration estimate of the largest singular value before scaling.
    pub sigma: f64,
    /// Factor the weight was multiplied by, `min(1, cap/sigma)`.
    pub scale: f64,
    /// True when the weight matrix was numerically zero and no scaling was
    /// applied.
    pub degenerate: bool,
}

/// Dense affine layer `y = W x + b`, weight row-major `(out × in)`.
///
/// Layers that certify a Lipschitz bound carry a [`SpectralState`];
/// [`LinearLayer::spectral_normalize`] rescales the stored weight so its
/// estimated largest singular value stays at or below the cap. Normalization
/// is a projection applied between optimizer steps, never inside a
/// differentiated computation, so gradient engines see a plain affine map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearLayer {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
    sn: Option<SpectralState>,
}

impl LinearLayer {
    /// Weight entries uniform in ±√(1/fan_in), bias zero.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        sn_cap: Option<f64>,
        rng: &mut R,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        if let Some(cap) = sn_cap {
            assert!(cap > 0.0 && cap <= 1.0, "sn_cap must lie in (0, 1]");
        }
        let bound = (1.0 / in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let sn = sn_cap.map(|cap| SpectralState {
            cap,
            u: random_unit(out_dim, rng),
            v: random_unit(in_dim, rng),
        });
        Self {
            in_dim,
            out_dim,
            weight: weight,
            bias: vec![0.0; out_dim],
            sn,
        }
    }

    pub fn from_parts(out_dim: usize, in_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(weight.len(), out_dim * in_dim);
        assert_eq!(bias.len(), out_dim);
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
            sn: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn is_capped(&self) -> bool {
        self.sn.is_some()
    }

    pub fn sn_cap(&self) -> Option<f64> {
        self.sn.as_ref().map(|s| s.cap)
    }

    /// `y = W x + b`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            *yr = self.bias[r] + crate::linalg::dot(row, x);
        }
    }

    /// `y = Wᵀ x` (no bias).
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.out_dim);
        debug_assert_eq!(y.len(), self.in_dim);
        y.fill(0.0);
        for (r, xr) in x.iter().enumerate() {
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += w * xr;
            }
        }
    }

    /// `y = W x` (no bias).
    pub fn apply_linear(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            *yr = crate::linalg::dot(row, x);
        }
    }

    /// Rescales the stored weight to `W · min(1, cap/σ̂)` where `σ̂` is the
    /// power-iteration estimate of the largest singular value. The singular
    /// vector estimates persist across calls, so one iteration per training
    /// step keeps them tracking the weight.
    ///
    /// A numerically zero weight matrix cannot be normalized; it is left
    /// unchanged and flagged in the report.
    pub fn spectral_normalize(&mut self, power_iters: usize) -> SnReport {
        assert!(power_iters >= 1, "power_iters must be at least 1");
        let sn = self
            .sn
            .as_mut()
            .expect("spectral_normalize called on an uncapped layer");
        let mut tmp_v = vec![0.0; self.in_dim];
        let mut tmp_u = vec![0.0; self.out_dim];
        // The Rayleigh estimate converges to σ from below, so rescale in
        // chunks: later chunks see near-converged vectors and correct any
        // overshoot left by the first rescale.
        let mut done = 0;
        let mut first_estimate = None;
        let mut total_scale = 1.0;
        while done < power_iters {
            let chunk = (power_iters - done).min(10);
            for _ in 0..chunk {
                // v ← normalize(Wᵀ u)
                matvec_t(&self.weight, self.out_dim, self.in_dim, &sn.u, &mut tmp_v);
                if !normalize_in_place(&mut tmp_v) {
                    return SnReport {
                        sigma: sn.cap,
                        scale: total_scale,
                        degenerate: true,
                    };
                }
                sn.v.copy_from_slice(&tmp_v);
                // u ← normalize(W v)
                matvec(&self.weight, self.out_dim, self.in_dim, &sn.v, &mut tmp_u);
                if !normalize_in_place(&mut tmp_u) {
                    return SnReport {
                        sigma: sn.cap,
                        scale: total_scale,
                        degenerate: true,
                    };
                }
                sn.u.copy_from_slice(&tmp_u);
            }
            done += chunk;
            matvec(&self.weight, self.out_dim, self.in_dim, &sn.v, &mut tmp_u);
            let sigma = crate::linalg::dot(&sn.u, &tmp_u);
            if first_estimate.is_none() {
                first_estimate = Some(sigma);
            }
            if sigma > sn.cap {
                let scale = sn.cap / sigma;
                total_scale *= scale;
                for w in &mut self.weight {
                    *w *= scale;
                }
            }
        }
        SnReport {
            // Estimate of the incoming weight's largest singular value.
            sigma: first_estimate.unwrap_or(sn.cap),
            scale: total_scale,
            degenerate: false,
        }
    }

    /// Repeats [`Self::spectral_normalize`] until a full pass no longer
    /// rescales, so the cap actually holds rather than holding up to the
    /// Rayleigh-quotient underestimate of a single pass. Used at
    /// initialization; training steps use the single amortized pass.
    pub fn spectral_normalize_converged(&mut self, power_iters: usize, max_rounds: usize) -> SnReport {
        let mut report = self.spectral_normalize(power_iters);
        for _ in 1..max_rounds {
            if report.degenerate || report.scale >= 1.0 {
                break;
            }
            report = self.spectral_normalize(power_iters);
        }
        report
    }
}

impl Params for LinearLayer {
    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weight);
        out.extend_from_slice(&self.bias);
    }

    fn unpack_from(&mut self, reader: &mut ParamReader) {
        let w_len = self.weight.len();
        self.weight.copy_from_slice(reader.take(w_len));
        let b_len = self.bias.len();
        self.bias.copy_from_slice(reader.take(b_len));
    }
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    for r in 0..rows {
        y[r] = crate::linalg::dot(&w[r * cols..(r + 1) * cols], x);
    }
}

fn matvec_t(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    y.fill(0.0);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        for (yc, wrc) in y.iter_mut().zip(row) {
            *yc += wrc * x[r];
        }
    }
}

fn normalize_in_place(v: &mut [f64]) -> bool {
    let n = crate::linalg::norm2(v);
    if n < 1e-30 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    true
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if normalize_in_place(&mut v) {
            return v;
        }
    }
}
