use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ComparisonReport, SweepResult, SweepSpec};
use crate::codec::TrainedMode;
use crate::error::{Error, Result};

/// One line of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub n: usize,
    pub snr_db: f64,
    pub cr: f64,
    pub mean_psnr_db: f64,
    pub stderr_db: f64,
    pub samples: usize,
}

impl SweepRow {
    pub fn rows(result: &SweepResult) -> Vec<SweepRow> {
        result
            .cells
            .iter()
            .map(|c| SweepRow {
                model: result.model.label(),
                n: c.n,
                snr_db: c.snr_db,
                cr: c.cr,
                mean_psnr_db: c.mean_psnr_db,
                stderr_db: c.stderr_db,
                samples: c.samples,
            })
            .collect()
    }
}

const HEADER: [&str; 7] = ["model", "n", "snr_db", "cr", "mean_psnr_db", "stderr_db", "samples"];

/// 17 significant digits, enough to recover every f64 exactly.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    model: TrainedMode,
    checkpoint: &'a Option<PathBuf>,
    spec: &'a SweepSpec,
    capped_samples: usize,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    sweeps: Vec<SweepMeta<'a>>,
    comparison: Option<&'a ComparisonReport>,
}

/// Writes `sweep.csv` and `report.json` into `dir`, returning their paths.
pub fn export_results(
    dir: &Path,
    results: &[SweepResult],
    report: Option<&ComparisonReport>,
) -> Result<(PathBuf, PathBuf)> {
    if results.is_empty() {
        return Err(Error::usage("nothing to export"));
    }
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(HEADER)?;
    for r in results {
        for row in SweepRow::rows(r) {
            w.write_record([
                row.model,
                row.n.to_string(),
                float(row.snr_db),
                float(row.cr),
                float(row.mean_psnr_db),
                float(row.stderr_db),
                row.samples.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let json_path = dir.join("report.json");
    let file = ReportFile {
        sweeps: results
            .iter()
            .map(|r| SweepMeta {
                model: r.model,
                checkpoint: &r.checkpoint,
                spec: &r.spec,
                capped_samples: r.cells.iter().map(|c| c.capped).sum(),
            })
            .collect(),
        comparison: report,
    };
    std::fs::write(&json_path, serde_json::to_string_pretty(&file)?)?;
    Ok((csv_path, json_path))
}

pub fn import_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
