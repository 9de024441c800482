use std::path::Path;

use crate::error::{Error, Result};

use super::{Dataset, TimeSeriesSample};

/// Loads the long-format CSV `series_id,label,time,ch_0..ch_{d-1}`.
///
/// Rows belonging to one series must appear in time order with a constant
/// label; an empty channel cell marks a missing observation. Violations are
/// reported with the offending 1-based line number.
pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(csv_error)?;

    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.len() < 4 {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be series_id,label,time,ch_0.. (got {} fields)",
                headers.len()
            ),
        });
    }
    for (i, expected) in ["series_id", "label", "time"].iter().enumerate() {
        if &headers[i] != *expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("header field {i} must be '{expected}', got '{}'", &headers[i]),
            });
        }
    }
    let d_x = headers.len() - 3;

    // Accumulate per series in first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut series: std::collections::HashMap<String, TimeSeriesSample> =
        std::collections::HashMap::new();

    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} fields, got {} (ragged channel count)",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let id = record[0].to_string();
        let label: usize = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("label '{}' is not a non-negative integer", &record[1]),
        })?;
        let time: f64 = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("time '{}' is not a number", &record[2]),
        })?;

        let entry = series.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            TimeSeriesSample {
                times: Vec::new(),
                values: Vec::new(),
                observed: Vec::new(),
                label,
            }
        });
        if entry.label != label {
            return Err(Error::Parse {
                line,
                message: format!(
                    "series '{id}' changes label from {} to {label}",
                    entry.label
                ),
            });
        }
        if let Some(&last) = entry.times.last() {
            if time <= last {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "series '{id}' times not strictly increasing ({last} then {time})"
                    ),
                });
            }
        }
        entry.times.push(time);
        for ch in 0..d_x {
            let cell = &record[3 + ch];
            if cell.is_empty() {
                entry.values.push(0.0);
                entry.observed.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("channel value '{cell}' is not a number"),
                })?;
                entry.values.push(v);
                entry.observed.push(true);
            }
        }
    }

    let samples: Vec<TimeSeriesSample> = order
        .iter()
        .map(|id| series.remove(id).expect("series recorded in order"))
        .collect();
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let num_classes = samples.iter().map(|s| s.label).max().unwrap() + 1;
    let name = path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Ok(Dataset {
        name,
        num_classes,
        d_x,
        samples,
    })
}

/// Writes the same long format `load_csv_dataset` reads; missing entries
/// become empty cells.
pub fn save_csv_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(csv_error)?;
    let mut header = vec!["series_id".to_string(), "label".into(), "time".into()];
    for ch in 0..ds.d_x {
        header.push(format!("ch_{ch}"));
    }
    writer.write_record(&header).map_err(csv_error)?;
    for (sid, sample) in ds.samples.iter().enumerate() {
        for i in 0..sample.num_obs() {
            let mut row = vec![
                sid.to_string(),
                sample.label.to_string(),
                format!("{}", sample.times[i]),
            ];
            for ch in 0..ds.d_x {
                if sample.observed[i * ds.d_x + ch] {
                    row.push(format!("{}", sample.values[i * ds.d_x + ch]));
                } else {
                    row.push(String::new());
                }
            }
            writer.write_record(&row).map_err(csv_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
