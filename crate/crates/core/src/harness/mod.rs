//! Splits, the CD-GNN and baseline training loops, evaluation, repeated
//! runs, ablations, the λ grid and result persistence.

mod config;
mod record;
mod report;
mod runs;
mod split;
mod train;

use std::path::Path;

use crate::error::Result;
use crate::graph::Graph;

pub use config::RunConfig;
pub use record::{blob_hash, dataset_hash, EpochRecord, ModelKind, RunRecord};
pub use report::{load_dir, report_csv, report_dir, PlotData, Series, CSV_HEADER};
pub use runs::{ablate, multirun, summarize, sweep, AblationRow, MultiRun, Summary, SweepCell, LAMBDA1_GRID, LAMBDA2_GRID};
pub use split::{holdout_split, Split};
pub use train::{
    evaluate, evaluate_cached, l1_normalized, mini_batches, train_cdgnn, train_cdgnn_on, train_gcn_baseline, train_gcn_baseline_on, EgoCache, Evaluation, GcnClassifier,
    Network, Trained,
};

/// Seeded 60/20/20 node split of `g`.
pub fn split(g: &Graph, seed: u64) -> Result<Split> {
    split::split(g.num_nodes(), seed)
}

/// Loads and validates a graph file.
pub fn ingest(path: impl AsRef<Path>) -> Result<Graph> {
    Graph::load(path)
}
