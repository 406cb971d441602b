//! Analytic layer gains under a dominant inductive subgraph, their
//! Monte-Carlo verification, the improvement margins of a disentangled
//! causal branch, and an audit of the disentanglement assumptions on a
//! trained model.

mod audit;
mod gains;
mod improvement;
mod montecarlo;

pub use audit::{assumption_audit, AuditConfig, AuditReport, AuditThresholds};
pub use gains::{deep_layer_gain, depth_decay, depth_decay_of_gains, effective_homophily, one_layer_gain, DepthDecay, GainParams};
pub use improvement::{cumulative_ratio, gain_improvement_check, ImprovementConfig, ImprovementReport, LayerMargin, Margins};
pub use montecarlo::{check_rows_csv, monte_carlo_one_layer, theory_check, CheckRow, Grid, GridPoint, GroupSizes, McConfig, McEstimate};
