use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney statistic over midranks).
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::domain("AUC needs both classes to be nonempty"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (p, n) = (positive.len() as f64, negative.len() as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// AUC of structure-mask scores (indexed by edge id) separating causal
/// edges from shortcut edges.
pub fn disentanglement_score(
    edge_scores: &[f64],
    causal: &BTreeSet<usize>,
    shortcut: &BTreeSet<usize>,
) -> Result<f64> {
    let pick = |set: &BTreeSet<usize>| -> Result<Vec<f64>> {
        set.iter()
            .map(|&e| {
                edge_scores
                    .get(e)
                    .copied()
                    .ok_or_else(|| Error::domain(format!("no score for edge {e}")))
            })
            .collect()
    };
    auc(&pick(causal)?, &pick(shortcut)?)
}
