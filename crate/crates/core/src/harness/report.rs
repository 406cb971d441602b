use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use super::runs::SweepCell;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "dataset", "seed", "h_L", "h_F", "split", "accuracy", "loss_s", "loss_c", "loss_cf", "loss_hsic",
];

/// One row per split of every record; losses are those of the kept epoch.
pub fn report_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        let l = r.best_losses();
        for (split, acc) in [("train", r.train_accuracy), ("val", r.val_accuracy), ("test", r.test_accuracy)] {
            w.write_record([
                r.dataset.clone(),
                r.config.seed.to_string(),
                r.h_l.to_string(),
                r.h_f.to_string(),
                split.to_string(),
                acc.to_string(),
                l.l_s.to_string(),
                l.l_c.to_string(),
                l.l_cf.to_string(),
                l.l_hsic.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Whether `name` has the `<model>-<16 hex>.json` form of a saved record.
fn is_record_name(name: &str) -> bool {
    let Some(stem) = name.strip_suffix(".json") else {
        return false;
    };
    let Some((model, hash)) = stem.split_once('-') else {
        return false;
    };
    matches!(model, "cdgnn" | "gcn") && hash.len() == 16 && hash.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Loads every RunRecord file in `dir`, sorted by file name. Other files,
/// such as saved models or plot data, are skipped.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(is_record_name))
        .collect();
    paths.sort();
    paths.iter().map(RunRecord::load).collect()
}

/// Aggregate CSV of a directory of RunRecords.
pub fn report_dir(dir: impl AsRef<Path>) -> Result<String> {
    report_csv(&load_dir(dir)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub yerr: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub series: Vec<Series>,
}

impl PlotData {
    /// Mean test accuracy against λ1, one series per λ2.
    pub fn from_sweep(cells: &[SweepCell]) -> PlotData {
        let mut series: Vec<Series> = Vec::new();
        for c in cells {
            let label = format!("lambda2={}", c.lambda2);
            let idx = match series.iter().position(|s| s.label == label) {
                Some(i) => i,
                None => {
                    series.push(Series {
                        label,
                        x: vec![],
                        y: vec![],
                        yerr: vec![],
                    });
                    series.len() - 1
                }
            };
            let s = &mut series[idx];
            s.x.push(c.lambda1);
            s.y.push(c.result.test.mean);
            s.yerr.push(c.result.test.std);
        }
        PlotData { series }
    }

    /// Per-epoch loss terms and branch cross-entropies of one run.
    pub fn loss_curves(record: &RunRecord) -> PlotData {
        let x: Vec<f64> = record.epochs.iter().map(|e| e.epoch as f64).collect();
        let curve = |label: &str, f: fn(&super::record::EpochRecord) -> f64| Series {
            label: label.to_string(),
            x: x.clone(),
            y: record.epochs.iter().map(f).collect(),
            yerr: vec![0.0; x.len()],
        };
        PlotData {
            series: vec![
                curve("loss_s", |e| e.losses.l_s),
                curve("loss_c", |e| e.losses.l_c),
                curve("loss_cf", |e| e.losses.l_cf),
                curve("loss_hsic", |e| e.losses.l_hsic),
                curve("total", |e| e.losses.total),
                curve("ce_s", |e| e.losses.ce_s),
                curve("ce_c", |e| e.losses.ce_c),
            ],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
