//! Causal/shortcut disentanglement: learnable masks split every ego
//! subgraph into two complementary parts, two GCN branches embed them, and
//! four loss terms pull the branches apart.
//!
//! * `L_s`: generalized cross-entropy on the shortcut head
//! * `L_c`: cross-entropy on the causal head, reweighted by relative difficulty
//! * `L_cf`: both objectives again on counterfactual embeddings whose
//!   shortcut half is permuted within the batch
//! * `L_HSIC`: kernel dependence between causal and shortcut node embeddings

mod hsic;
mod lemma;
mod losses;
mod masks;
mod model;
mod score;

pub use hsic::{hsic, hsic_at, hsic_value, median_bandwidth};
pub use lemma::gce_grad_identity_check;
pub use losses::{
    causal_loss, counterfactual_loss, difficulty_weight, gce, gce_rows, loss_terms, loss_terms_frozen, loss_terms_smoothed, Frozen,
    non_finite_term, permutation, total_loss, Ablation, DifficultyEma, LossBreakdown, LossTerms, LossWeights,
};
pub use masks::{MaskPair, Masks};
pub use model::{BranchBundle, CdGnn, ModelConfig};
pub use score::{auc, disentanglement_score};
