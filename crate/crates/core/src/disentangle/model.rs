use rand::Rng;
use serde::{Deserialize, Serialize};

use super::masks::{MaskPair, Masks};
use crate::autodiff::{Bound, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::{Aggregation, Gcn, GraphBatch, Head, Mode, Readout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub num_classes: usize,
    pub scorer_hidden: usize,
    pub aggregation: Aggregation,
    /// Route the shortcut branch's gradient away from the mask scorers, so
    /// only the causal side shapes the masks.
    pub detach_shortcut_masks: bool,
}

/// Masks, both branch encoders and readouts, and the two heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdGnn {
    pub masks: MaskPair,
    pub gnn_c: Gcn,
    pub gnn_s: Gcn,
    pub readout_c: Readout,
    pub readout_s: Readout,
    pub head_c: Head,
    pub head_s: Head,
    #[serde(default)]
    pub detach_shortcut_masks: bool,
}

/// Branch embeddings of one batch.
#[derive(Clone, Copy)]
pub struct BranchBundle<'t> {
    pub masks: Masks<'t>,
    /// Causal and shortcut node embeddings, `n x d` each.
    pub nodes_c: Var<'t>,
    pub nodes_s: Var<'t>,
    /// Subgraph embeddings, `G x d` each.
    pub h_c: Var<'t>,
    pub h_s: Var<'t>,
}

impl<'t> BranchBundle<'t> {
    /// `[h_c; h_s]`.
    pub fn h(&self) -> Result<Var<'t>> {
        self.h_c.concat_cols(self.h_s)
    }
}

impl CdGnn {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.num_classes < 2 {
            return Err(Error::InvalidConfig("at least 2 classes are needed".into()));
        }
        let d = cfg.hidden;
        Ok(CdGnn {
            masks: MaskPair::new(store, cfg.in_dim, cfg.scorer_hidden, rng),
            gnn_c: Gcn::new(store, "gnn_c", cfg.in_dim, d, cfg.layers, cfg.dropout, rng)?.with_aggregation(cfg.aggregation),
            gnn_s: Gcn::new(store, "gnn_s", cfg.in_dim, d, cfg.layers, cfg.dropout, rng)?.with_aggregation(cfg.aggregation),
            readout_c: Readout::new(store, "readout_c", d, rng),
            readout_s: Readout::new(store, "readout_s", d, rng),
            head_c: Head::new(store, "head_c", 2 * d, cfg.num_classes, rng),
            head_s: Head::new(store, "head_s", 2 * d, cfg.num_classes, rng),
            detach_shortcut_masks: cfg.detach_shortcut_masks,
        })
    }

    /// Splits every subgraph of the batch with the masks and embeds both parts.
    pub fn embed<'t>(&self, tape: &'t Tape, params: &Bound<'t>, batch: &GraphBatch, mode: Mode) -> Result<BranchBundle<'t>> {
        let masks = self.masks.materialize(tape, params, batch)?;
        let shortcut_mode = match mode {
            Mode::Train { seed } => Mode::Train {
                seed: seed ^ 0x5157_0c7a_11ed_0001,
            },
            Mode::Eval => Mode::Eval,
        };
        let nodes_c = self
            .gnn_c
            .forward(tape, params, batch, Some(masks.edge), Some(masks.feature), mode)?;
        let (edge_s, feature_s) = if self.detach_shortcut_masks {
            (masks.edge.detach().complement(), masks.feature.detach().complement())
        } else {
            (masks.edge_complement(), masks.feature_complement())
        };
        let nodes_s = self
            .gnn_s
            .forward(tape, params, batch, Some(edge_s), Some(feature_s), shortcut_mode)?;
        Ok(BranchBundle {
            masks,
            h_c: self.readout_c.forward(params, nodes_c, batch)?,
            h_s: self.readout_s.forward(params, nodes_s, batch)?,
            nodes_c,
            nodes_s,
        })
    }

    /// Shortcut-head probabilities on `[h_c; h_s]`. The causal half is
    /// detached, so the head only trains the shortcut side.
    pub fn shortcut_probs<'t>(&self, params: &Bound<'t>, h_c: Var<'t>, h_s: Var<'t>) -> Result<Var<'t>> {
        self.head_s.probs(params, h_c.detach().concat_cols(h_s)?)
    }

    /// Causal-head probabilities on `[h_c; h_s]` with the shortcut half detached.
    pub fn causal_probs<'t>(&self, params: &Bound<'t>, h_c: Var<'t>, h_s: Var<'t>) -> Result<Var<'t>> {
        self.head_c.probs(params, h_c.concat_cols(h_s.detach())?)
    }
}
