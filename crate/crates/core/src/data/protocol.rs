use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;

/// Masks each non-anchor entry independently with probability `rate`,
/// on top of any missingness already present. The earliest time point of
/// each sample is never masked: path construction needs its anchor.
pub fn inject_missingness(ds: &Dataset, rate: f64, seed: u64) -> Dataset {
    assert!((0.0..1.0).contains(&rate), "rate must lie in [0, 1)");
    let mut out = ds.clone();
    if rate == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sample in &mut out.samples {
        for i in 1..sample.num_obs() {
            for ch in 0..ds.d_x {
                if rng.gen_bool(rate) {
                    sample.observed[i * ds.d_x + ch] = false;
                }
            }
        }
    }
    out
}

/// Stratified 70/15/15 split with global sizes `⌊0.7n⌋ / ⌊0.15n⌋ /
/// remainder`. Per-class allocations follow largest remainders so the global
/// sizes hold exactly. A class with fewer than 3 samples triggers a warning
/// and an unstratified fallback.
pub fn split_dataset(ds: &Dataset, seed: u64) -> (Dataset, Dataset, Dataset) {
    let n = ds.len();
    assert!(n >= 7, "need at least 7 samples to split 70/15/15");
    let n_train = (0.7 * n as f64).floor() as usize;
    let n_val = (0.15 * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let counts = ds.class_counts();
    let (train_idx, val_idx, test_idx) = if counts.iter().any(|&c| c < 3) {
        log::warn!("a class has fewer than 3 samples; falling back to an unstratified split");
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let train = idx[..n_train].to_vec();
        let val = idx[n_train..n_train + n_val].to_vec();
        let test = idx[n_train + n_val..].to_vec();
        (train, val, test)
    } else {
        // Shuffle within each class, classes in label order.
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
        for (i, s) in ds.samples.iter().enumerate() {
            per_class[s.label].push(i);
        }
        for class in &mut per_class {
            class.shuffle(&mut rng);
        }
        let train_quota = largest_remainder(&counts, 0.7, n_train);
        let mut train = Vec::with_capacity(n_train);
        let mut rest: Vec<Vec<usize>> = Vec::with_capacity(ds.num_classes);
        for (class, quota) in per_class.into_iter().zip(&train_quota) {
            train.extend_from_slice(&class[..*quota]);
            rest.push(class[*quota..].to_vec());
        }
        let val_quota = largest_remainder(&counts, 0.15, n_val);
        let mut val = Vec::with_capacity(n_val);
        let mut test = Vec::new();
        for (class, quota) in rest.into_iter().zip(&val_quota) {
            val.extend_from_slice(&class[..*quota]);
            test.extend_from_slice(&class[*quota..]);
        }
        (train, val, test)
    };

    let subset = |idx: &[usize], suffix: &str| Dataset {
        name: format!("{}/{suffix}", ds.name),
        num_classes: ds.num_classes,
        d_x: ds.d_x,
        samples: idx.iter().map(|&i| ds.samples[i].clone()).collect(),
    };
    (
        subset(&train_idx, "train"),
        subset(&val_idx, "val"),
        subset(&test_idx, "test"),
    )
}

/// Per-class integer allocation hitting `target` exactly: floor of the
/// fractional quota plus one for the largest remainders (ties broken by
/// class index).
fn largest_remainder(counts: &[usize], fraction: f64, target: usize) -> Vec<usize> {
    let mut base: Vec<usize> = Vec::with_capacity(counts.len());
    let mut fractional: Vec<(f64, usize)> = Vec::with_capacity(counts.len());
    for (c, &count) in counts.iter().enumerate() {
        let quota = fraction * count as f64;
        base.push(quota.floor() as usize);
        fractional.push((quota - quota.floor(), c));
    }
    let assigned: usize = base.iter().sum();
    let mut leftover = target.saturating_sub(assigned);
    fractional.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for (_, class) in fractional {
        if leftover == 0 {
            break;
        }
        if base[class] < counts[class] {
            base[class] += 1;
            leftover -= 1;
        }
    }
    base
}

/// Per-channel location/scale computed on observed training entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standardizes all three splits with statistics from the observed entries
/// of the training split only. Channels with vanishing spread are centered
/// but left unscaled.
pub fn normalize_channels(
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
) -> (Dataset, Dataset, Dataset, ChannelStats) {
    let d = train.d_x;
    let mut mean = vec![0.0; d];
    let mut count = vec![0usize; d];
    for s in &train.samples {
        for i in 0..s.num_obs() {
            for ch in 0..d {
                if s.observed[i * d + ch] {
                    mean[ch] += s.values[i * d + ch];
                    count[ch] += 1;
                }
            }
        }
    }
    for ch in 0..d {
        if count[ch] > 0 {
            mean[ch] /= count[ch] as f64;
        }
    }
    let mut var = vec![0.0; d];
    for s in &train.samples {
        for i in 0..s.num_obs() {
            for ch in 0..d {
                if s.observed[i * d + ch] {
                    let dv = s.values[i * d + ch] - mean[ch];
                    var[ch] += dv * dv;
                }
            }
        }
    }
    let std: Vec<f64> = (0..d)
        .map(|ch| {
            if count[ch] > 0 {
                (var[ch] / count[ch] as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();

    let stats = ChannelStats { mean, std };
    let apply = |ds: &Dataset| {
        let mut out = ds.clone();
        for s in &mut out.samples {
            for i in 0..s.num_obs() {
                for ch in 0..d {
                    let v = &mut s.values[i * d + ch];
                    *v -= stats.mean[ch];
                    if stats.std[ch] >= 1e-8 {
                        *v /= stats.std[ch];
                    }
                }
            }
        }
        out
    };
    (apply(train), apply(val), apply(test), stats)
}
