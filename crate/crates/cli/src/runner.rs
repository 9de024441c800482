use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use flowpath_core::cde::{CdeModel, PathSpec};
use flowpath_core::data::{
    generate_synthetic, inject_missingness, load_csv_dataset, normalize_channels, split_dataset,
    Dataset,
};
use flowpath_core::train::{evaluate, train_model, MetricsReport, TrainConfig, TrainHistory};

use crate::config::{DatasetSpec, ExperimentConfig};

/// Everything recorded about one `(method, rate, seed)` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    pub rate: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub best_val_loss: f64,
    pub epochs_trained: usize,
    pub stopped_early: bool,
    /// Hash of the split membership; equal hashes across methods certify a
    /// controlled comparison.
    pub split_hash: u64,
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    Ok(match spec {
        DatasetSpec::Synthetic {
            name,
            n,
            noise_sd,
            seed,
        } => generate_synthetic(*name, *n, *noise_sd, *seed),
        DatasetSpec::Csv { path } => {
            load_csv_dataset(path).with_context(|| format!("loading {}", path.display()))?
        }
    })
}

/// Seed for the missingness mask of one `(seed, rate)` cell: the same mask
/// must hit every method, while distinct rates get independent masks.
fn mask_seed(seed: u64, rate: f64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((rate * 1e6) as u64)
}

fn fnv1a(bytes: impl Iterator<Item = u8>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn split_signature(train: &Dataset, val: &Dataset, test: &Dataset) -> u64 {
    let bytes = [train, val, test].into_iter().flat_map(|ds| {
        ds.samples.iter().flat_map(|s| {
            s.label
                .to_le_bytes()
                .into_iter()
                .chain(s.times.iter().flat_map(|t| t.to_le_bytes()))
        })
    });
    fnv1a(bytes)
}

/// One full protocol run: inject missingness, split, normalize, train,
/// evaluate. Returns the record and the trained model.
pub fn run_single(
    base: &Dataset,
    method: PathSpec,
    rate: f64,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<(RunRecord, CdeModel, TrainHistory, MetricsReport)> {
    let masked = inject_missingness(base, rate, mask_seed(seed, rate));
    let (train, val, test) = split_dataset(&masked, seed);
    let split_hash = split_signature(&train, &val, &test);
    let (train, val, test, _stats) = normalize_channels(&train, &val, &test);

    let model_cfg = config.model_config(base.d_x, base.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xA5A5));
    let model = CdeModel::new(&model_cfg, method, &mut rng);

    let train_cfg = TrainConfig {
        learning_rate: config.train.learning_rate,
        max_epochs: config.train.max_epochs,
        patience: config.train.patience,
        batch_size: config.train.batch_size,
        seed,
        optimizer: config.train.optimizer,
        gradient_engine: config.train.gradient_engine,
        solver_steps: config.train.solver_steps,
    };
    let (best_model, history) = train_model(&model, &train, &val, &train_cfg)?;
    let mut metrics = evaluate(&best_model, &test)?;
    metrics.loss_curve = history.loss_curve();

    let record = RunRecord {
        dataset: base.name.clone(),
        method: method.name(),
        rate,
        seed,
        accuracy: metrics.accuracy,
        macro_precision: metrics.macro_precision,
        macro_recall: metrics.macro_recall,
        macro_f1: metrics.macro_f1,
        best_val_loss: history.best_val_loss(),
        epochs_trained: history.epochs.len(),
        stopped_early: history.stopped_early,
        split_hash,
    };
    Ok((record, best_model, history, metrics))
}

/// Writes the per-run artifacts under
/// `out/<dataset>/<method>/<rate>/<seed>/`.
pub fn write_run_artifacts(
    out_root: &Path,
    record: &RunRecord,
    model: &CdeModel,
    history: &TrainHistory,
    metrics: &MetricsReport,
) -> Result<()> {
    let dir = out_root
        .join(&record.dataset)
        .join(&record.method)
        .join(format!("{}", record.rate))
        .join(format!("{}", record.seed));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("model.json"), serde_json::to_string(model)?)?;
    std::fs::write(
        dir.join("history.json"),
        serde_json::to_string_pretty(history)?,
    )?;
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(metrics)?,
    )?;
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// `summary.csv`: one row per (method, rate) with mean ± std over seeds.
pub fn write_summary(out_root: &Path, records: &[RunRecord]) -> Result<()> {
    use std::fmt::Write as _;
    let mut groups: Vec<(String, f64)> = Vec::new();
    for r in records {
        let key = (r.method.clone(), r.rate);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut csv = String::from("method,rate,seeds,accuracy_mean,accuracy_std,f1_mean,f1_std\n");
    for (method, rate) in &groups {
        let acc: Vec<f64> = records
            .iter()
            .filter(|r| &r.method == method && r.rate == *rate)
            .map(|r| r.accuracy)
            .collect();
        let f1: Vec<f64> = records
            .iter()
            .filter(|r| &r.method == method && r.rate == *rate)
            .map(|r| r.macro_f1)
            .collect();
        let (am, asd) = mean_std(&acc);
        let (fm, fsd) = mean_std(&f1);
        writeln!(csv, "{method},{rate},{},{am},{asd},{fm},{fsd}", acc.len())?;
    }
    std::fs::write(out_root.join("summary.csv"), csv)?;
    Ok(())
}

/// `ablation.csv`: method rows × missing-rate columns, cells `mean±std`.
pub fn write_ablation_table(
    out_root: &Path,
    records: &[RunRecord],
    methods: &[String],
    rates: &[f64],
) -> Result<String> {
    use std::fmt::Write as _;
    let mut table = String::from("method");
    for rate in rates {
        write!(table, ",{rate}")?;
    }
    table.push('\n');
    for method in methods {
        write!(table, "{method}")?;
        for rate in rates {
            let acc: Vec<f64> = records
                .iter()
                .filter(|r| &r.method == method && r.rate == *rate)
                .map(|r| r.accuracy)
                .collect();
            let (mean, std) = mean_std(&acc);
            write!(table, ",{mean:.4}±{std:.4}")?;
        }
        table.push('\n');
    }
    std::fs::write(out_root.join("ablation.csv"), &table)?;
    Ok(table)
}
