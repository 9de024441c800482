use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cde::CdeModel;
use crate::error::Result;
use crate::path::{ObservationGrid, PathBuilder};

use super::kde::gaussian_kde;

/// Plot-ready structural-analysis exports for one sample: dense path
/// evaluations for the ground-truth/observed/learned variants, per-channel
/// kernel density estimates on a 512-point grid, and pairwise 2-D channel
/// trajectories. Returns the files written.
pub fn export_structural_analysis(
    complete: &ObservationGrid,
    sparse: &ObservationGrid,
    mlp_model: Option<&CdeModel>,
    flow_model: Option<&CdeModel>,
    grid_points: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let complete_pre = complete.preprocess()?;
    let sparse_pre = sparse.preprocess()?;
    let channels = complete_pre.channels();

    // Dense variants: (name, per-timepoint values).
    let dense_times: Vec<f64> = (0..grid_points)
        .map(|i| i as f64 / (grid_points - 1) as f64)
        .collect();
    let mut variants: Vec<(String, Vec<Vec<f64>>)> = Vec::new();

    let truth_builder = PathBuilder::Linear;
    let truth_path = truth_builder.build(&complete_pre)?;
    variants.push((
        "truth".into(),
        dense_times.iter().map(|&t| truth_path.eval(t)).collect(),
    ));
    if let Some(model) = mlp_model {
        let path = model.build_path(&sparse_pre)?;
        variants.push((
            "mlp".into(),
            dense_times.iter().map(|&t| path.eval(t)).collect(),
        ));
    }
    if let Some(model) = flow_model {
        let path = model.build_path(&sparse_pre)?;
        variants.push((
            "flowpath".into(),
            dense_times.iter().map(|&t| path.eval(t)).collect(),
        ));
    }

    let header: String = std::iter::once("t".to_string())
        .chain((0..channels).map(|c| format!("ch_{c}")))
        .collect::<Vec<_>>()
        .join(",");

    for (name, rows) in &variants {
        let file = out_dir.join(format!("path_{name}.csv"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&file)?);
        writeln!(w, "{header}")?;
        for (t, row) in dense_times.iter().zip(rows) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{t},{}", cells.join(","))?;
        }
        w.flush()?;
        written.push(file);
    }

    // Observed scatter: rescaled times, empty cells for missing entries.
    {
        let t0 = sparse.times()[0];
        let span = sparse.times()[sparse.num_obs() - 1] - t0;
        let file = out_dir.join("path_observed.csv");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&file)?);
        let obs_header: String = std::iter::once("t".to_string())
            .chain((0..sparse.channels()).map(|c| format!("ch_{c}")))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{obs_header}")?;
        for i in 0..sparse.num_obs() {
            let t = (sparse.times()[i] - t0) / span;
            let cells: Vec<String> = (0..sparse.channels())
                .map(|c| {
                    if sparse.is_observed(i, c) {
                        format!("{}", sparse.value(i, c))
                    } else {
                        String::new()
                    }
                })
                .collect();
            writeln!(w, "{t},{}", cells.join(","))?;
        }
        w.flush()?;
        written.push(file);
    }

    // Per-channel KDEs of the dense path values.
    for (name, rows) in &variants {
        for ch in 0..channels {
            let data: Vec<f64> = rows.iter().map(|r| r[ch]).collect();
            let kde = gaussian_kde(&data, 512);
            let file = out_dir.join(format!("kde_{name}_ch{ch}.csv"));
            let mut w = std::io::BufWriter::new(std::fs::File::create(&file)?);
            writeln!(w, "x,density")?;
            for (x, d) in kde.grid.iter().zip(&kde.density) {
                writeln!(w, "{x},{d}")?;
            }
            w.flush()?;
            written.push(file);
        }
    }

    // Pairwise 2-D trajectories over the data channels (the appended time
    // channel is excluded).
    let data_channels = channels - 1;
    for (name, rows) in &variants {
        for i in 0..data_channels {
            for j in (i + 1)..data_channels {
                let file = out_dir.join(format!("traj2d_{name}_ch{i}_ch{j}.csv"));
                let mut w = std::io::BufWriter::new(std::fs::File::create(&file)?);
                writeln!(w, "t,ch_{i},ch_{j}")?;
                for (t, row) in dense_times.iter().zip(rows) {
                    writeln!(w, "{t},{},{}", row[i], row[j])?;
                }
                w.flush()?;
                written.push(file);
            }
        }
    }

    Ok(written)
}
