use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use flowpath_core::cde::PathSpec;
use flowpath_core::data::{generate_synthetic, save_csv_dataset, SyntheticKind};
use flowpath_core::flow::FlowKind;
use flowpath_core::path::AnchorMode;
use flowpath_core::verify::{run_suite, VerifyLevel};

use crate::config::ExperimentConfig;
use crate::runner::{
    load_dataset, run_single, write_ablation_table, write_run_artifacts, write_summary, RunRecord,
};

/// The (method × rate × seed) matrix executed with at most `jobs` runs in
/// flight. Runs are independent and collected in input order, so the output
/// is identical for any job count.
fn run_matrix(
    config: &ExperimentConfig,
    methods: &[PathSpec],
    out_root: &Path,
    jobs: usize,
) -> Result<Vec<RunRecord>> {
    let base = load_dataset(&config.dataset)?;
    let mut cells = Vec::new();
    for &method in methods {
        for &rate in &config.missing_rates {
            for &seed in &config.seeds {
                cells.push((method, rate, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building worker pool")?;
    let outcomes: Vec<Result<RunRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(method, rate, seed)| {
                let (record, model, history, metrics) =
                    run_single(&base, method, rate, seed, config)?;
                write_run_artifacts(out_root, &record, &model, &history, &metrics)?;
                log::info!(
                    "{} rate={} seed={}: accuracy {:.4}",
                    record.method,
                    rate,
                    seed,
                    record.accuracy
                );
                Ok(record)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        records.push(outcome?);
    }
    Ok(records)
}

fn finish_outputs(out_root: &Path, records: &[RunRecord]) -> Result<()> {
    std::fs::create_dir_all(out_root)?;
    std::fs::write(
        out_root.join("results.json"),
        serde_json::to_string_pretty(records)?,
    )?;
    write_summary(out_root, records)?;
    Ok(())
}

/// `flowpath train`: one method across all configured rates and seeds.
pub fn cmd_train(config_path: &Path, out_override: Option<PathBuf>, jobs: usize) -> Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let method = config
        .method
        .ok_or_else(|| anyhow::anyhow!("config field `method`: required by the train command"))?;
    let out_root = out_override.unwrap_or_else(|| config.out_dir.clone());
    std::fs::create_dir_all(&out_root)?;
    let records = run_matrix(&config, &[method], &out_root, jobs)?;
    finish_outputs(&out_root, &records)?;
    println!(
        "train: {} runs complete; results in {}",
        records.len(),
        out_root.display()
    );
    Ok(())
}

/// The fixed ablation set: the two interpolation baselines, the
/// unconstrained network path, and the three flow architectures.
pub fn ablation_methods(anchor: AnchorMode) -> Vec<PathSpec> {
    vec![
        PathSpec::CubicSpline,
        PathSpec::Linear,
        PathSpec::MlpPath,
        PathSpec::FlowPath {
            kind: FlowKind::ResNet,
            anchor,
        },
        PathSpec::FlowPath {
            kind: FlowKind::Gru,
            anchor,
        },
        PathSpec::FlowPath {
            kind: FlowKind::Coupling,
            anchor,
        },
    ]
}

/// `flowpath ablate`: the fixed comparison set on one dataset across the
/// configured missing rates, with identical splits per seed.
pub fn cmd_ablate(config_path: &Path, out_override: Option<PathBuf>, jobs: usize) -> Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let out_root = out_override.unwrap_or_else(|| config.out_dir.clone());
    std::fs::create_dir_all(&out_root)?;
    let methods = ablation_methods(config.model.anchor);
    let records = run_matrix(&config, &methods, &out_root, jobs)?;
    finish_outputs(&out_root, &records)?;

    // Controlled comparison: per (seed, rate), every method must have seen
    // the same split.
    for &seed in &config.seeds {
        for &rate in &config.missing_rates {
            let hashes: Vec<u64> = records
                .iter()
                .filter(|r| r.seed == seed && r.rate == rate)
                .map(|r| r.split_hash)
                .collect();
            if hashes.windows(2).any(|w| w[0] != w[1]) {
                bail!("split hashes diverged at seed {seed}, rate {rate}");
            }
        }
    }

    let method_names: Vec<String> = methods.iter().map(|m| m.name()).collect();
    let table = write_ablation_table(&out_root, &records, &method_names, &config.missing_rates)?;
    println!("{table}");
    Ok(())
}

/// `flowpath verify`: the structural-check suite; nonzero exit when any
/// check fails, machine-readable report in `verify.json`.
pub fn cmd_verify(level: VerifyLevel, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let results = run_suite(level).map_err(|e| anyhow::anyhow!("verify suite error: {e}"))?;
    std::fs::write(
        out_dir.join("verify.json"),
        serde_json::to_string_pretty(&results)?,
    )?;
    let mut all_passed = true;
    for check in &results {
        println!(
            "{}: {}",
            check.name,
            if check.passed { "pass" } else { "FAIL" }
        );
        all_passed &= check.passed;
    }
    if !all_passed {
        bail!("verification failed; see verify.json");
    }
    Ok(())
}

/// `flowpath synth`: write a generated dataset in the loadable CSV format.
pub fn cmd_synth(
    kind: SyntheticKind,
    n: usize,
    noise_sd: f64,
    seed: u64,
    out_path: &Path,
) -> Result<()> {
    let ds = generate_synthetic(kind, n, noise_sd, seed);
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_csv_dataset(&ds, out_path).with_context(|| format!("writing {}", out_path.display()))?;
    println!(
        "synth: wrote {} samples ({} rows) to {}",
        ds.len(),
        ds.samples.iter().map(|s| s.num_obs()).sum::<usize>(),
        out_path.display()
    );
    Ok(())
}
