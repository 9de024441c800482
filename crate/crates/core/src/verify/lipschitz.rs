use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cde::CdeModel;
use crate::error::Result;
use crate::nn::{pack, unpack};
use crate::path::ObservationGrid;

/// Per-direction difference quotients `‖z_{θ+δ}(T) − z_θ(T)‖ / ‖δ‖` across
/// perturbation scales.
#[derive(Debug, Clone)]
pub struct LipschitzReport {
    /// `ratios[direction][scale]`
    pub ratios: Vec<Vec<f64>>,
    /// Worst max/min ratio spread over scales across directions.
    pub worst_spread: f64,
    pub passed: bool,
}

/// Boundedness of the parameter-to-solution map: for random unit directions
/// and shrinking scales the difference quotient must not blow up — the
/// max/min spread over scales stays within a factor 2 per direction.
/// Directions with no effect at all (quotients below 1e-12) pass trivially.
pub fn check_param_lipschitz(
    model: &CdeModel,
    grid: &ObservationGrid,
    scales: &[f64],
    directions: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    assert!(
        scales.windows(2).all(|w| w[1] < w[0]) && scales.iter().all(|&s| s > 0.0),
        "scales must be strictly decreasing and positive"
    );
    let theta = pack(model);
    let (_, base_traj) = model.forward_classify(grid)?;
    let base = base_traj.final_state().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ratios = Vec::with_capacity(directions);
    let mut worst_spread = 1.0f64;
    let mut passed = true;
    for _ in 0..directions {
        let mut dir: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = crate::linalg::norm2(&dir);
        for v in &mut dir {
            *v /= norm;
        }
        let mut row = Vec::with_capacity(scales.len());
        for &scale in scales {
            let mut probe = model.clone();
            let mut perturbed = theta.clone();
            for (p, d) in perturbed.as_mut_slice().iter_mut().zip(&dir) {
                *p += scale * d;
            }
            unpack(&mut probe, &perturbed);
            let (_, traj) = probe.forward_classify(grid)?;
            let diff: f64 = traj
                .final_state()
                .iter()
                .zip(&base)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            row.push(diff / scale);
        }
        let max = row.iter().fold(0.0f64, |m, &v| m.max(v));
        let min = row.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if max > 1e-12 {
            let spread = max / min.max(1e-300);
            worst_spread = worst_spread.max(spread);
            passed &= spread <= 2.0;
        }
        ratios.push(row);
    }
    Ok(LipschitzReport {
        ratios,
        worst_spread,
        passed,
    })
}
