use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::record::{ModelKind, RunRecord};
use super::train::{train_cdgnn, train_gcn_baseline};
use crate::disentangle::Ablation;
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const LAMBDA1_GRID: [f64; 4] = [5.0, 10.0, 15.0, 20.0];
pub const LAMBDA2_GRID: [f64; 4] = [0.1, 0.3, 0.5, 1.0];

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRun {
    pub records: Vec<RunRecord>,
    pub train: Summary,
    pub val: Summary,
    pub test: Summary,
}

/// Accuracy summaries over a set of runs.
pub fn summarize(records: Vec<RunRecord>) -> MultiRun {
    let pick = |f: fn(&RunRecord) -> f64| Summary::of(&records.iter().map(f).collect::<Vec<_>>());
    MultiRun {
        train: pick(|r| r.train_accuracy),
        val: pick(|r| r.val_accuracy),
        test: pick(|r| r.test_accuracy),
        records,
    }
}

fn train(kind: ModelKind, g: &Graph, cfg: &RunConfig) -> Result<RunRecord> {
    match kind {
        ModelKind::Cdgnn => train_cdgnn(g, cfg),
        ModelKind::Gcn => train_gcn_baseline(g, cfg),
    }
    .map(|(r, _)| r)
}

fn runs(kind: ModelKind, g: &Graph, config: &RunConfig, num_runs: usize) -> Result<MultiRun> {
    let records = (0..num_runs as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = RunConfig {
                seed: config.seed.wrapping_add(k),
                ..config.clone()
            };
            train(kind, g, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(records))
}

/// Independent runs with seeds `seed, seed + 1, ...`.
pub fn multirun(kind: ModelKind, g: &Graph, config: &RunConfig, num_runs: usize) -> Result<MultiRun> {
    if num_runs < 2 {
        return Err(Error::InvalidConfig(format!(
            "multirun needs at least 2 distinct seeds, got {num_runs}"
        )));
    }
    runs(kind, g, config, num_runs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub ablation: Ablation,
    pub result: MultiRun,
}

/// Full CD-GNN followed by each single-term ablation.
pub fn ablate(g: &Graph, config: &RunConfig, num_runs: usize) -> Result<Vec<AblationRow>> {
    let off = |f: fn(&mut Ablation)| {
        let mut a = config.ablation;
        f(&mut a);
        a
    };
    let variants = [
        ("full", config.ablation),
        ("-L_s", off(|a| a.no_ls = true)),
        ("-L_c", off(|a| a.no_lc = true)),
        ("-L_cf", off(|a| a.no_lcf = true)),
        ("-L_HSIC", off(|a| a.no_hsic = true)),
    ];
    variants
        .into_iter()
        .map(|(name, ablation)| {
            let cfg = RunConfig {
                ablation,
                ..config.clone()
            };
            Ok(AblationRow {
                name: name.to_string(),
                ablation,
                result: runs(ModelKind::Cdgnn, g, &cfg, num_runs.max(1))?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda1: f64,
    pub lambda2: f64,
    pub result: MultiRun,
}

/// The `λ1 × λ2` grid of CD-GNN multiruns, λ2-major.
pub fn sweep(g: &Graph, config: &RunConfig, num_runs: usize) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::with_capacity(LAMBDA1_GRID.len() * LAMBDA2_GRID.len());
    for &lambda2 in &LAMBDA2_GRID {
        for &lambda1 in &LAMBDA1_GRID {
            let cfg = RunConfig {
                lambda1,
                lambda2,
                ..config.clone()
            };
            cells.push(SweepCell {
                lambda1,
                lambda2,
                result: runs(ModelKind::Cdgnn, g, &cfg, num_runs.max(1))?,
            });
        }
    }
    Ok(cells)
}
