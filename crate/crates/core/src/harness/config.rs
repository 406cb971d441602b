use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disentangle::{Ablation, LossWeights};
use crate::error::{Error, Result};
use crate::gnn::Aggregation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Preset name, fixture name or file path the graph came from.
    pub dataset: String,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub layers: usize,
    pub q: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Ego-subgraph radius; the layer count when absent.
    pub hops: Option<usize>,
    /// Hidden width of the edge-mask scorer.
    pub scorer_hidden: usize,
    pub aggregation: Aggregation,
    /// Moving-average factor of the per-node losses behind the difficulty
    /// weights; 0 uses each batch's values directly.
    pub difficulty_ema: f64,
    /// Scale every feature row to unit L1 norm before training.
    pub normalize_features: bool,
    /// Keep shortcut-branch losses from training the mask scorers.
    pub detach_shortcut_masks: bool,
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        RunConfig {
            dataset: String::new(),
            seed: 0,
            lr: 1e-4,
            weight_decay: 5e-4,
            hidden: 150,
            dropout: 0.1,
            layers: 2,
            q: w.q,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            epochs: 200,
            patience: 30,
            batch_size: 32,
            hops: None,
            scorer_hidden: 32,
            aggregation: Aggregation::default(),
            difficulty_ema: 0.0,
            normalize_features: true,
            detach_shortcut_masks: true,
            ablation: Ablation::default(),
        }
    }
}

impl RunConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            q: self.q,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn hops(&self) -> usize {
        self.hops.unwrap_or(self.layers)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.hidden == 0 || self.layers == 0 || self.scorer_hidden == 0 {
            return fail("hidden width, layer count and scorer width must be positive");
        }
        if self.epochs == 0 {
            return fail("at least one epoch is needed");
        }
        if self.patience > self.epochs {
            return fail("patience cannot exceed the epoch count");
        }
        if !(0.0..1.0).contains(&self.difficulty_ema) {
            return fail("difficulty EMA factor must lie in [0, 1)");
        }
        if self.batch_size < 2 {
            return fail("batch size must be at least 2");
        }
        self.loss_weights().validate()
    }

    /// Hex SHA-256 of the canonical JSON form; names persisted records.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
