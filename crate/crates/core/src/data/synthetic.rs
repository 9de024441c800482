use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, TimeSeriesSample};

/// Angular velocity of the spiral classes (two full turns over the horizon,
/// so both classes share the same endpoint and final-point features carry
/// no class signal).
pub const SPIRAL_OMEGA: f64 = 4.0 * std::f64::consts::PI;

/// Spiral radius at time `t ∈ [0, 1]`.
pub fn spiral_radius(t: f64) -> f64 {
    0.2 + 0.8 * t
}

/// Decay rate of the damped-oscillator classes.
pub const OSCILLATOR_DECAY: f64 = 1.5;
/// Class frequencies (Hz over the unit horizon) of the oscillator task.
pub const OSCILLATOR_FREQS: [f64; 2] = [2.0, 4.0];

const SYNTH_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Two classes: clockwise vs counter-clockwise 2-D spirals.
    Spiral2,
    /// Two classes of damped 1-D oscillators differing in frequency.
    Oscillator,
}

impl std::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SyntheticKind::Spiral2 => write!(f, "spiral2"),
            SyntheticKind::Oscillator => write!(f, "oscillator"),
        }
    }
}

/// Balanced synthetic classification data on 100 regular time points with
/// i.i.d. Gaussian observation noise. Identical seeds give identical
/// datasets.
pub fn generate_synthetic(kind: SyntheticKind, n: usize, noise_sd: f64, seed: u64) -> Dataset {
    assert!(n >= 4, "need at least 4 samples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("valid noise distribution");
    let times: Vec<f64> = (0..SYNTH_LEN)
        .map(|i| i as f64 / (SYNTH_LEN - 1) as f64)
        .collect();
    let d_x = match kind {
        SyntheticKind::Spiral2 => 2,
        SyntheticKind::Oscillator => 1,
    };
    let samples = (0..n)
        .map(|i| {
            let label = i % 2;
            let mut values = Vec::with_capacity(SYNTH_LEN * d_x);
            for &t in &times {
                match kind {
                    SyntheticKind::Spiral2 => {
                        let r = spiral_radius(t);
                        // Class 0 winds counter-clockwise, class 1 clockwise.
                        let sign = if label == 0 { 1.0 } else { -1.0 };
                        values.push(r * (SPIRAL_OMEGA * t).cos());
                        values.push(sign * r * (SPIRAL_OMEGA * t).sin());
                    }
                    SyntheticKind::Oscillator => {
                        let f = OSCILLATOR_FREQS[label];
                        values.push(
                            (-OSCILLATOR_DECAY * t).exp()
                                * (2.0 * std::f64::consts::PI * f * t).cos(),
                        );
                    }
                }
            }
            if noise_sd > 0.0 {
                for v in &mut values {
                    *v += noise.sample(&mut rng);
                }
            }
            TimeSeriesSample {
                times: times.clone(),
                observed: vec![true; values.len()],
                values,
                label,
            }
        })
        .collect();
    Dataset {
        name: kind.to_string(),
        num_classes: 2,
        d_x,
        samples,
    }
}
