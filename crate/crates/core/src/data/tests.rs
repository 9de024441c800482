use super::synthetic::{spiral_radius, SPIRAL_OMEGA};
use super::*;

fn spiral(n: usize, noise: f64, seed: u64) -> Dataset {
    generate_synthetic(SyntheticKind::Spiral2, n, noise, seed)
}

#[test]
fn noiseless_spiral_matches_generator_formula() {
    let ds = spiral(4, 0.0, 7);
    let s0 = &ds.samples[0];
    assert_eq!(s0.label, 0);
    for (i, &t) in s0.times.iter().enumerate() {
        let r = spiral_radius(t);
        assert!((s0.values[2 * i] - r * (SPIRAL_OMEGA * t).cos()).abs() < 1e-14);
        assert!((s0.values[2 * i + 1] - r * (SPIRAL_OMEGA * t).sin()).abs() < 1e-14);
    }
    // Class 1 mirrors the second coordinate.
    let s1 = &ds.samples[1];
    for (i, &t) in s1.times.iter().enumerate() {
        let r = spiral_radius(t);
        assert!((s1.values[2 * i + 1] + r * (SPIRAL_OMEGA * t).sin()).abs() < 1e-14);
    }
}

#[test]
fn same_seed_same_dataset() {
    assert_eq!(spiral(20, 0.1, 1), spiral(20, 0.1, 1));
    assert_ne!(spiral(20, 0.1, 1), spiral(20, 0.1, 2));
    let osc1 = generate_synthetic(SyntheticKind::Oscillator, 10, 0.05, 3);
    let osc2 = generate_synthetic(SyntheticKind::Oscillator, 10, 0.05, 3);
    assert_eq!(osc1, osc2);
}

/// Final-point features carry no class signal (shared endpoint), while the
/// full sequence separates the classes almost perfectly: temporal
/// information matters on this task.
#[test]
fn final_point_classifier_fails_where_sequence_oracle_succeeds() {
    let ds = spiral(200, 0.05, 11);

    // Logistic regression on the final observation (plus bias), trained to
    // convergence on the full set; even in-sample it cannot beat chance by
    // much.
    let features: Vec<[f64; 3]> = ds
        .samples
        .iter()
        .map(|s| {
            let last = s.num_obs() - 1;
            [s.values[2 * last], s.values[2 * last + 1], 1.0]
        })
        .collect();
    let labels: Vec<f64> = ds.samples.iter().map(|s| s.label as f64).collect();
    let mut w = [0.0f64; 3];
    for _ in 0..2000 {
        let mut grad = [0.0f64; 3];
        for (x, y) in features.iter().zip(&labels) {
            let z = w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
            let p = 1.0 / (1.0 + (-z).exp());
            for k in 0..3 {
                grad[k] += (p - y) * x[k];
            }
        }
        for k in 0..3 {
            w[k] -= 0.1 / features.len() as f64 * grad[k];
        }
    }
    let logistic_acc = features
        .iter()
        .zip(&labels)
        .filter(|(x, y)| {
            let z = w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
            (z > 0.0) == (**y > 0.5)
        })
        .count() as f64
        / ds.len() as f64;
    assert!(
        logistic_acc < 0.75,
        "final-point logistic accuracy {logistic_acc} should be near chance"
    );

    // Leave-one-out nearest neighbor on the complete series.
    let mut correct = 0;
    for i in 0..ds.len() {
        let mut best = (f64::INFINITY, 0usize);
        for j in 0..ds.len() {
            if i == j {
                continue;
            }
            let d2: f64 = ds.samples[i]
                .values
                .iter()
                .zip(&ds.samples[j].values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < best.0 {
                best = (d2, ds.samples[j].label);
            }
        }
        if best.1 == ds.samples[i].label {
            correct += 1;
        }
    }
    let nn_acc = correct as f64 / ds.len() as f64;
    assert!(nn_acc > 0.95, "sequence 1-NN accuracy {nn_acc}");
}

#[test]
fn missingness_rate_zero_is_identity() {
    let ds = spiral(10, 0.1, 21);
    assert_eq!(inject_missingness(&ds, 0.0, 5), ds);
}

#[test]
fn missingness_empirical_rate_matches_nominal() {
    let ds = spiral(100, 0.0, 22); // 100 samples × 100 points × 2 channels
    let masked = inject_missingness(&ds, 0.5, 23);
    let mut missing = 0usize;
    let mut total = 0usize;
    for s in &masked.samples {
        // Skip the protected first row.
        for &obs in &s.observed[ds.d_x..] {
            total += 1;
            if !obs {
                missing += 1;
            }
        }
    }
    assert!(total > 10_000);
    let rate = missing as f64 / total as f64;
    assert!((rate - 0.5).abs() <= 0.02, "empirical rate {rate}");
}

#[test]
fn first_observation_never_masked() {
    let ds = spiral(30, 0.0, 24);
    for rate in [0.3, 0.5, 0.7, 0.95] {
        let masked = inject_missingness(&ds, rate, 25);
        for s in &masked.samples {
            assert!(s.observed[..ds.d_x].iter().all(|&o| o));
        }
    }
}

#[test]
fn masked_dataset_survives_preprocessing() {
    let ds = spiral(20, 0.05, 26);
    for rate in [0.3, 0.5, 0.7] {
        let masked = inject_missingness(&ds, rate, 27);
        let grids = masked.preprocessed().unwrap();
        assert_eq!(grids.len(), 20);
        for (g, _) in grids {
            assert!(g.is_complete());
            assert_eq!(g.channels(), 3);
        }
    }
}

#[test]
fn split_sizes_follow_floor_rule_and_stratify() {
    let ds = spiral(100, 0.0, 31);
    let (train, val, test) = split_dataset(&ds, 1);
    assert_eq!(train.len(), 70);
    assert_eq!(val.len(), 15);
    assert_eq!(test.len(), 15);
    let counts = train.class_counts();
    assert!((counts[0] as i64 - 35).unsigned_abs() <= 1);
    assert!((counts[1] as i64 - 35).unsigned_abs() <= 1);
}

#[test]
fn split_is_seeded_and_partitions() {
    let ds = spiral(33, 0.1, 32);
    let (tr1, va1, te1) = split_dataset(&ds, 9);
    let (tr2, va2, te2) = split_dataset(&ds, 9);
    assert_eq!(tr1, tr2);
    assert_eq!(va1, va2);
    assert_eq!(te1, te2);

    // Union = original multiset; pairwise disjoint.
    assert_eq!(tr1.len() + va1.len() + te1.len(), ds.len());
    let key = |s: &TimeSeriesSample| {
        s.values
            .iter()
            .map(|v| v.to_bits().to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut seen = std::collections::HashSet::new();
    for s in tr1
        .samples
        .iter()
        .chain(va1.samples.iter())
        .chain(te1.samples.iter())
    {
        assert!(seen.insert(key(s)), "sample appears in two splits");
    }
    for s in &ds.samples {
        assert!(seen.contains(&key(s)), "sample lost by the split");
    }
}

#[test]
fn normalization_uses_train_statistics_only() {
    let ds = spiral(60, 0.2, 41);
    let masked = inject_missingness(&ds, 0.3, 42);
    let (train, val, test) = split_dataset(&masked, 43);
    let (ntrain, nval, _ntest, stats) = normalize_channels(&train, &val, &test);

    // Observed training entries are standardized.
    for ch in 0..2 {
        let mut vals = Vec::new();
        for s in &ntrain.samples {
            for i in 0..s.num_obs() {
                if s.observed[i * 2 + ch] {
                    vals.push(s.values[i * 2 + ch]);
                }
            }
        }
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() <= 1e-10, "train mean {mean}");
        assert!((var.sqrt() - 1.0).abs() <= 1e-10, "train std {}", var.sqrt());
    }
    assert!(stats.std.iter().all(|&s| s > 0.0));

    // Validation statistics generally differ from (0, 1): no leakage.
    let mut vals = Vec::new();
    for s in &nval.samples {
        for i in 0..s.num_obs() {
            if s.observed[i * 2] {
                vals.push(s.values[i * 2]);
            }
        }
    }
    let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
    assert!(mean.abs() > 1e-12);
}

#[test]
fn constant_channel_centered_but_unscaled() {
    let mut ds = spiral(10, 0.0, 51);
    for s in &mut ds.samples {
        for i in 0..s.num_obs() {
            s.values[i * 2] = 4.2; // flatten channel 0
        }
    }
    let (train, val, test) = split_dataset(&ds, 5);
    let (ntrain, _, _, stats) = normalize_channels(&train, &val, &test);
    assert!(stats.std[0] < 1e-8);
    for s in &ntrain.samples {
        for i in 0..s.num_obs() {
            assert!((s.values[i * 2] - 0.0).abs() < 1e-12);
        }
    }
}

#[test]
fn csv_roundtrip_preserves_dataset() {
    let dir = std::env::temp_dir().join("flowpath_csv_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("tiny.csv");

    let ds = Dataset {
        name: "tiny".into(),
        num_classes: 2,
        d_x: 1,
        samples: vec![
            TimeSeriesSample {
                times: vec![0.0, 1.0, 2.0],
                values: vec![0.25, 0.0, -1.5],
                observed: vec![true, false, true],
                label: 0,
            },
            TimeSeriesSample {
                times: vec![0.0, 0.7, 1.9],
                values: vec![1.0, 2.0, 3.0],
                observed: vec![true, true, true],
                label: 1,
            },
        ],
    };
    save_csv_dataset(&ds, &path).unwrap();
    let loaded = load_csv_dataset(&path).unwrap();
    assert_eq!(loaded.d_x, 1);
    assert_eq!(loaded.num_classes, 2);
    assert_eq!(loaded.samples.len(), 2);
    for (a, b) in ds.samples.iter().zip(&loaded.samples) {
        assert_eq!(a.times, b.times);
        assert_eq!(a.observed, b.observed);
        assert_eq!(a.label, b.label);
        for i in 0..a.values.len() {
            if a.observed[i] {
                assert_eq!(a.values[i], b.values[i]);
            }
        }
    }
}

#[test]
fn csv_parse_errors_name_the_line() {
    let dir = std::env::temp_dir().join("flowpath_csv_test");
    std::fs::create_dir_all(&dir).unwrap();

    let bad_times = dir.join("bad_times.csv");
    std::fs::write(
        &bad_times,
        "series_id,label,time,ch_0\n0,0,0.0,1.0\n0,0,0.5,2.0\n0,0,0.25,3.0\n",
    )
    .unwrap();
    match load_csv_dataset(&bad_times).unwrap_err() {
        crate::error::Error::Parse { line, message } => {
            assert_eq!(line, 4);
            assert!(message.contains("strictly increasing"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }

    let bad_label = dir.join("bad_label.csv");
    std::fs::write(
        &bad_label,
        "series_id,label,time,ch_0\n0,0,0.0,1.0\n0,1,0.5,2.0\n",
    )
    .unwrap();
    match load_csv_dataset(&bad_label).unwrap_err() {
        crate::error::Error::Parse { line, message } => {
            assert_eq!(line, 3);
            assert!(message.contains("label"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }

    let ragged = dir.join("ragged.csv");
    std::fs::write(
        &ragged,
        "series_id,label,time,ch_0,ch_1\n0,0,0.0,1.0,2.0\n0,0,0.5,1.0\n",
    )
    .unwrap();
    match load_csv_dataset(&ragged).unwrap_err() {
        crate::error::Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_cell_sets_mask() {
    let dir = std::env::temp_dir().join("flowpath_csv_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("gaps.csv");
    std::fs::write(
        &path,
        "series_id,label,time,ch_0,ch_1\na,1,0.0,1.0,2.0\na,1,1.0,,3.0\n",
    )
    .unwrap();
    let ds = load_csv_dataset(&path).unwrap();
    let s = &ds.samples[0];
    assert!(s.observed[0] && s.observed[1]);
    assert!(!s.observed[2]);
    assert!(s.observed[3]);
}

#[test]
fn json_envelope_roundtrip() {
    let ds = inject_missingness(&spiral(6, 0.1, 61), 0.4, 62);
    let json = serde_json::to_string(&ds).unwrap();
    assert!(json.contains("\"K\":2"));
    let back: Dataset = serde_json::from_str(&json).unwrap();
    assert_eq!(ds, back);
}
