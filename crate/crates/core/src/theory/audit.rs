use std::collections::VecDeque;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape};
use crate::disentangle::{hsic_value, permutation, CdGnn};
use crate::error::{Error, Result};
use crate::gnn::{GraphBatch, Mode};
use crate::graph::{ego_subgraph, Graph};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditThresholds {
    pub hsic: f64,
    pub sensitivity: f64,
    pub dominance: f64,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        AuditThresholds {
            hsic: 0.05,
            sensitivity: 0.1,
            dominance: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub num_permutations: usize,
    pub seed: u64,
    pub thresholds: AuditThresholds,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            num_permutations: 20,
            seed: 0,
            thresholds: AuditThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// HSIC between causal and shortcut node embeddings.
    pub hsic_value: f64,
    /// Largest change of the causal head's target-class probability when the
    /// shortcut embeddings are permuted across subgraphs.
    pub counterfactual_sensitivity: f64,
    /// Per layer, the share of the causal branch's incoming edge weight that
    /// sits on edges the structure mask assigns to the shortcut side.
    pub dominance: Vec<f64>,
    /// Per layer, the cross-class mean ratio of the causal branch's layer
    /// input; absent when fewer than two classes have a nonzero mean.
    pub cross_class_ratio: Vec<Option<f64>>,
    pub thresholds: AuditThresholds,
    pub hsic_pass: bool,
    pub sensitivity_pass: bool,
    pub dominance_pass: bool,
}

impl AuditReport {
    pub fn passes(&self) -> bool {
        self.hsic_pass && self.sensitivity_pass && self.dominance_pass
    }
}

/// Hop distance of every batch row from its subgraph's ego.
fn hops(batch: &GraphBatch) -> Vec<usize> {
    let mut adj = vec![Vec::new(); batch.num_nodes];
    for (&u, &v) in batch.src.iter().zip(batch.dst.iter()) {
        adj[u].push(v);
    }
    let mut hop = vec![usize::MAX; batch.num_nodes];
    let mut queue: VecDeque<usize> = batch.egos.iter().copied().collect();
    for &e in batch.egos.iter() {
        hop[e] = 0;
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if hop[v] == usize::MAX {
                hop[v] = hop[u] + 1;
                queue.push_back(v);
            }
        }
    }
    hop
}

fn cross_class_ratio(h: &Matrix, labels: &[usize], classes: usize) -> Option<f64> {
    let d = h.cols();
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (r, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (s, x) in sums[y].iter_mut().zip(h.row(r)) {
            *s += x;
        }
    }
    let total: Vec<f64> = (0..d).map(|k| sums.iter().map(|s| s[k]).sum()).collect();
    let n = labels.len();
    let ratios: Vec<f64> = (0..classes)
        .filter(|&c| counts[c] > 0 && counts[c] < n)
        .filter_map(|c| {
            let own: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            let other: Vec<f64> = (0..d).map(|k| (total[k] - sums[c][k]) / (n - counts[c]) as f64).collect();
            let norm: f64 = own.iter().map(|x| x * x).sum();
            (norm > 0.0).then(|| -own.iter().zip(&other).map(|(a, b)| a * b).sum::<f64>() / norm)
        })
        .collect();
    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Measures the disentanglement assumptions of a CD-GNN on the ego subgraphs
/// of `nodes` in `g`: branch independence, counterfactual invariance of the
/// causal head and the shortcut dominance left in the causal branch.
pub fn assumption_audit(
    model: &CdGnn,
    store: &ParamStore,
    g: &Graph,
    nodes: &[usize],
    hop_radius: usize,
    cfg: &AuditConfig,
) -> Result<AuditReport> {
    if nodes.len() < 2 {
        return Err(Error::BatchTooSmall(nodes.len()));
    }
    let subs: Vec<_> = nodes.iter().map(|&i| ego_subgraph(g, i, hop_radius)).collect();
    let batch = GraphBatch::from_egos(&subs);
    let tape = Tape::new();
    let params = store.bind(&tape);
    let bundle = model.embed(&tape, &params, &batch, Mode::Eval)?;

    let hsic = hsic_value(&bundle.nodes_c.value(), &bundle.nodes_s.value())?;

    let targets: Vec<usize> = nodes.iter().map(|&i| g.labels()[i]).collect();
    let base = model.causal_probs(&params, bundle.h_c, bundle.h_s)?.value();
    let mut sensitivity: f64 = 0.0;
    for k in 0..cfg.num_permutations {
        let perm = permutation(nodes.len(), cfg.seed.wrapping_add(k as u64));
        let swapped = bundle.h_s.gather_rows(Rc::new(perm))?;
        let p = model.causal_probs(&params, bundle.h_c, swapped)?.value();
        for (i, &y) in targets.iter().enumerate() {
            sensitivity = sensitivity.max((base[(i, y)] - p[(i, y)]).abs());
        }
    }

    let layers = model.gnn_c.weights.len();
    let hop = hops(&batch);
    let mask = bundle.masks.edge.value();
    let dominance = (0..layers)
        .map(|l| {
            let reach = layers - 1 - l;
            let (mut shortcut, mut all) = (0.0, 0.0);
            for (&dst, &e) in batch.dst.iter().zip(batch.undirected.iter()) {
                if hop[dst] <= reach {
                    let m = mask[(e, 0)];
                    all += m;
                    if m < 0.5 {
                        shortcut += m;
                    }
                }
            }
            if all > 0.0 {
                shortcut / all
            } else {
                0.0
            }
        })
        .collect::<Vec<f64>>();

    let row_labels: Vec<usize> = batch.original_nodes.iter().map(|&i| g.labels()[i]).collect();
    let states = model.gnn_c.forward_layers(
        &tape,
        &params,
        &batch,
        Some(bundle.masks.edge),
        Some(bundle.masks.feature),
        Mode::Eval,
    )?;
    let cross = states[..layers]
        .iter()
        .map(|h| cross_class_ratio(&h.value(), &row_labels, g.num_classes()))
        .collect();

    let t = cfg.thresholds;
    Ok(AuditReport {
        hsic_value: hsic,
        counterfactual_sensitivity: sensitivity,
        dominance_pass: dominance.iter().all(|&b| b <= t.dominance),
        dominance,
        cross_class_ratio: cross,
        thresholds: t,
        hsic_pass: hsic <= t.hsic,
        sensitivity_pass: sensitivity <= t.sensitivity,
    })
}
