use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{train_with_restarts, EvalOptions, RestartOptions};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub const ABLATION_FILE: &str = "ablation.csv";

/// One allocation of `n_anc` ancillas, `n_anc_m` of them measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AblationCell {
    pub n_anc: usize,
    pub n_anc_m: usize,
}

impl AblationCell {
    pub fn n_anc_t(&self) -> usize {
        self.n_anc - self.n_anc_m
    }
}

/// Every cell with `n_anc` in `totals` and `1 ≤ n_anc_m ≤ n_anc`.
pub fn table_grid(totals: &[usize]) -> Vec<AblationCell> {
    totals
        .iter()
        .flat_map(|&n_anc| (1..=n_anc).map(move |n_anc_m| AblationCell { n_anc, n_anc_m }))
        .collect()
}

#[derive(Clone, Debug)]
pub struct AblationOptions {
    pub cells: Vec<AblationCell>,
    pub restarts: usize,
    /// `ablation.csv` plus one `cell_<n_anc>_<n_anc_m>` directory per cell.
    pub out_dir: Option<PathBuf>,
    pub deterministic: bool,
}

/// One row of `ablation.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    #[serde(rename = "N_anc")]
    pub n_anc: usize,
    #[serde(rename = "N_anc_m")]
    pub n_anc_m: usize,
    pub restart: usize,
    pub mean_fidelity: f64,
    #[serde(serialize_with = "as_flag")]
    pub selected_flag: bool,
}

fn as_flag<S: serde::Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

struct TableWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl TableWriter {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(ABLATION_FILE);
        let writer = csv::Writer::from_path(&path).map_err(|e| Error::format(&path, e.to_string()))?;
        Ok(Self { path, writer })
    }

    fn write(&mut self, rows: &[AblationRow]) -> Result<()> {
        for row in rows {
            self.writer
                .serialize(row)
                .map_err(|e| Error::format(&self.path, e.to_string()))?;
        }
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains and evaluates every cell in turn. Each cell's rows are flushed to
/// `ablation.csv` as soon as the cell finishes, so an interrupted grid keeps
/// its completed cells.
pub fn run_ablation(base: &TrainConfig, eval: &EvalOptions, options: &AblationOptions) -> Result<Vec<AblationRow>> {
    let mut table = options.out_dir.as_deref().map(TableWriter::create).transpose()?;
    let mut rows = Vec::new();
    for cell in &options.cells {
        if cell.n_anc_m > cell.n_anc {
            return Err(Error::Config(format!(
                "cell with {} measured of {} ancillas",
                cell.n_anc_m, cell.n_anc
            )));
        }
        let config = TrainConfig {
            n_anc_m: cell.n_anc_m,
            n_anc_t: cell.n_anc_t(),
            ..base.clone()
        };
        config.validate()?;
        let restarts = train_with_restarts(
            &config,
            eval,
            &RestartOptions {
                restarts: options.restarts,
                out_dir: options
                    .out_dir
                    .as_ref()
                    .map(|d| d.join(format!("cell_{}_{}", cell.n_anc, cell.n_anc_m))),
                deterministic: options.deterministic,
                stop_at: None,
            },
        )?;
        let cell_rows: Vec<AblationRow> = restarts
            .runs
            .iter()
            .enumerate()
            .map(|(i, run)| AblationRow {
                n_anc: cell.n_anc,
                n_anc_m: cell.n_anc_m,
                restart: run.restart,
                mean_fidelity: run.report.mean_fidelity,
                selected_flag: i == restarts.best,
            })
            .collect();
        if let Some(t) = table.as_mut() {
            t.write(&cell_rows)?;
        }
        rows.extend(cell_rows);
    }
    Ok(rows)
}

/// Best mean fidelity per cell, in first-appearance order.
pub fn best_per_cell(rows: &[AblationRow]) -> Vec<(AblationCell, f64)> {
    rows.iter()
        .filter(|r| r.selected_flag)
        .map(|r| {
            (
                AblationCell {
                    n_anc: r.n_anc,
                    n_anc_m: r.n_anc_m,
                },
                r.mean_fidelity,
            )
        })
        .collect()
}
