use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::hsic::{hsic_at, median_bandwidth};
use super::model::{BranchBundle, CdGnn};
use crate::autodiff::{Bound, Var, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::gnn::{cross_entropy_rows, one_hot};
use crate::matrix::Matrix;
use crate::synth::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub q: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            q: 0.7,
            lambda1: 10.0,
            lambda2: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidConfig(format!("q = {} is outside (0, 1]", self.q)));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Terms switched off by an ablation. Switched-off terms are still computed
/// and logged; they just carry coefficient zero in the total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_ls: bool,
    pub no_lc: bool,
    pub no_lcf: bool,
    pub no_hsic: bool,
}

impl Ablation {
    pub fn all(&self) -> bool {
        self.no_ls && self.no_lc && self.no_lcf && self.no_hsic
    }

    /// Coefficients of `(L_s, L_c, L_cf, L_HSIC)` in the total.
    pub fn coefficients(&self, w: &LossWeights) -> [f64; 4] {
        let on = |off: bool, c: f64| if off { 0.0 } else { c };
        [
            on(self.no_ls, 1.0),
            on(self.no_lc, 1.0),
            on(self.no_lcf, w.lambda1),
            on(self.no_hsic, w.lambda2),
        ]
    }
}

/// Per-term values of one batch (or an epoch average of them).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_s: f64,
    pub l_c: f64,
    pub l_cf: f64,
    pub l_hsic: f64,
    pub total: f64,
    /// Mean plain cross-entropy of the shortcut and causal heads.
    pub ce_s: f64,
    pub ce_c: f64,
}

/// Generalized cross-entropy `(1 - p^q) / q` of one probability.
pub fn gce(p: f64, q: f64) -> f64 {
    (1.0 - (q * p.max(LOG_FLOOR).ln()).exp()) / q
}

/// GCE of each row at its target, `n x 1`.
pub fn gce_rows<'t>(probs: Var<'t>, labels: &[usize], q: f64) -> Result<Var<'t>> {
    let (n, c) = probs.shape();
    if labels.len() != n || labels.iter().any(|&y| y >= c) {
        return Err(Error::ShapeMismatch {
            op: "gce",
            lhs: (n, c),
            rhs: (labels.len(), 1),
        });
    }
    let p = probs.mul(probs.tape().constant(one_hot(labels, c)))?.row_sums();
    Ok(p.ln().scale(q).exp().complement().scale(1.0 / q))
}

/// `ce_s / (ce_s + ce_c)`, or 0.5 when both are zero.
pub fn difficulty_weight(ce_s: f64, ce_c: f64) -> f64 {
    let total = ce_s + ce_c;
    if total > 0.0 {
        ce_s / total
    } else {
        0.5
    }
}

/// Per-node exponential moving averages of both branches' cross-entropy,
/// from which difficulty weights are taken instead of the raw batch values.
/// `alpha = 0` keeps no memory.
#[derive(Clone, Debug, PartialEq)]
pub struct DifficultyEma {
    alpha: f64,
    ce_s: Vec<f64>,
    ce_c: Vec<f64>,
    seen: Vec<bool>,
}

impl DifficultyEma {
    pub fn new(num_nodes: usize, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!("EMA factor must lie in [0, 1), got {alpha}")));
        }
        Ok(DifficultyEma {
            alpha,
            ce_s: vec![0.0; num_nodes],
            ce_c: vec![0.0; num_nodes],
            seen: vec![false; num_nodes],
        })
    }

    /// Folds in the batch values of `nodes` and returns their weights.
    pub fn update(&mut self, nodes: &[usize], ce_s: &[f64], ce_c: &[f64]) -> Vec<f64> {
        nodes
            .iter()
            .zip(ce_s.iter().zip(ce_c))
            .map(|(&i, (&s, &c))| {
                if self.seen[i] {
                    self.ce_s[i] = self.alpha * self.ce_s[i] + (1.0 - self.alpha) * s;
                    self.ce_c[i] = self.alpha * self.ce_c[i] + (1.0 - self.alpha) * c;
                } else {
                    (self.ce_s[i], self.ce_c[i], self.seen[i]) = (s, c, true);
                }
                difficulty_weight(self.ce_s[i], self.ce_c[i])
            })
            .collect()
    }
}

/// Mean of `weights[i] * CE(probs_i, labels_i)`.
pub fn causal_loss<'t>(probs: Var<'t>, labels: &[usize], weights: &[f64]) -> Result<Var<'t>> {
    let ce = cross_entropy_rows(probs, labels)?;
    ce.mul(probs.tape().constant(Matrix::column(weights)))
        .map(|v| v.mean())
}

/// Uniform permutation of `0..n` drawn from `seed`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng(seed));
    p
}

/// Mean over the batch of `GCE(Φ_s([h_c; h_s∘π]), y∘π) + W · CE(Φ_c([h_c; h_s∘π]), y)`.
pub fn counterfactual_loss<'t>(
    model: &CdGnn,
    params: &Bound<'t>,
    bundle: &BranchBundle<'t>,
    labels: &[usize],
    weights: &[f64],
    q: f64,
    perm: &[usize],
) -> Result<Var<'t>> {
    if labels.len() < 2 {
        return Err(Error::BatchTooSmall(labels.len()));
    }
    let swapped = bundle.h_s.gather_rows(Rc::new(perm.to_vec()))?;
    let y_cf: Vec<usize> = perm.iter().map(|&j| labels[j]).collect();
    let shortcut = gce_rows(model.shortcut_probs(params, bundle.h_c, swapped)?, &y_cf, q)?;
    let causal = cross_entropy_rows(model.causal_probs(params, bundle.h_c, swapped)?, labels)?
        .mul(bundle.h_c.tape().constant(Matrix::column(weights)))?;
    Ok(shortcut.add(causal)?.mean())
}

/// The four loss terms of one batch plus the difficulty weights behind them.
pub struct LossTerms<'t> {
    pub l_s: Var<'t>,
    pub l_c: Var<'t>,
    pub l_cf: Var<'t>,
    pub l_hsic: Var<'t>,
    pub weights: Vec<f64>,
    /// Kernel bandwidths of the HSIC term.
    pub bandwidths: (f64, f64),
    pub ce_s: f64,
    pub ce_c: f64,
}

/// The quantities that enter the objective without gradient: difficulty
/// weights and HSIC bandwidths.
#[derive(Clone, Debug, PartialEq)]
pub struct Frozen {
    pub weights: Vec<f64>,
    pub bandwidths: (f64, f64),
}

impl LossTerms<'_> {
    pub fn frozen(&self) -> Frozen {
        Frozen {
            weights: self.weights.clone(),
            bandwidths: self.bandwidths,
        }
    }
}

/// Builds every term for a batch whose subgraph labels are `labels`.
pub fn loss_terms<'t>(
    model: &CdGnn,
    params: &Bound<'t>,
    bundle: &BranchBundle<'t>,
    labels: &[usize],
    q: f64,
    perm: &[usize],
) -> Result<LossTerms<'t>> {
    loss_terms_smoothed(model, params, bundle, labels, q, perm, None)
}

/// [`loss_terms`] with difficulty weights read from `ema` for the batch's
/// node ids.
pub fn loss_terms_smoothed<'t>(
    model: &CdGnn,
    params: &Bound<'t>,
    bundle: &BranchBundle<'t>,
    labels: &[usize],
    q: f64,
    perm: &[usize],
    ema: Option<(&mut DifficultyEma, &[usize])>,
) -> Result<LossTerms<'t>> {
    let p_s = model.shortcut_probs(params, bundle.h_c, bundle.h_s)?;
    let p_c = model.causal_probs(params, bundle.h_c, bundle.h_s)?;
    let ce_s = cross_entropy_rows(p_s, labels)?.value().into_vec();
    let ce_c = cross_entropy_rows(p_c, labels)?.value().into_vec();
    let weights: Vec<f64> = match ema {
        Some((ema, nodes)) => ema.update(nodes, &ce_s, &ce_c),
        None => ce_s.iter().zip(&ce_c).map(|(&s, &c)| difficulty_weight(s, c)).collect(),
    };
    let frozen = Frozen {
        weights,
        bandwidths: (
            median_bandwidth(&bundle.nodes_c.value()),
            median_bandwidth(&bundle.nodes_s.value()),
        ),
    };
    loss_terms_frozen(model, params, bundle, labels, q, perm, &frozen)
}

/// [`loss_terms`] with the gradient-free quantities supplied, so the result
/// is a smooth function of the parameters alone.
pub fn loss_terms_frozen<'t>(
    model: &CdGnn,
    params: &Bound<'t>,
    bundle: &BranchBundle<'t>,
    labels: &[usize],
    q: f64,
    perm: &[usize],
    frozen: &Frozen,
) -> Result<LossTerms<'t>> {
    let p_s = model.shortcut_probs(params, bundle.h_c, bundle.h_s)?;
    let p_c = model.causal_probs(params, bundle.h_c, bundle.h_s)?;
    let n = labels.len() as f64;
    let mean = |p: Var<'t>| -> Result<f64> { Ok(cross_entropy_rows(p, labels)?.value().as_slice().iter().sum::<f64>() / n) };
    let weights = &frozen.weights;
    Ok(LossTerms {
        l_s: gce_rows(p_s, labels, q)?.mean(),
        l_c: causal_loss(p_c, labels, weights)?,
        l_cf: counterfactual_loss(model, params, bundle, labels, weights, q, perm)?,
        l_hsic: hsic_at(bundle.nodes_c, bundle.nodes_s, frozen.bandwidths)?,
        ce_s: mean(p_s)?,
        ce_c: mean(p_c)?,
        weights: weights.clone(),
        bandwidths: frozen.bandwidths,
    })
}

/// `c_s L_s + c_c L_c + c_cf L_cf + c_h L_HSIC` with coefficients from
/// [`Ablation::coefficients`], plus the logged breakdown.
pub fn total_loss<'t>(
    terms: &LossTerms<'t>,
    weights: &LossWeights,
    ablation: &Ablation,
) -> Result<(Var<'t>, LossBreakdown)> {
    if ablation.all() {
        return Err(Error::AllTermsAblated);
    }
    let [cs, cc, ccf, ch] = ablation.coefficients(weights);
    let total = terms
        .l_s
        .scale(cs)
        .add(terms.l_c.scale(cc))?
        .add(terms.l_cf.scale(ccf))?
        .add(terms.l_hsic.scale(ch))?;
    let breakdown = LossBreakdown {
        l_s: terms.l_s.item(),
        l_c: terms.l_c.item(),
        l_cf: terms.l_cf.item(),
        l_hsic: terms.l_hsic.item(),
        total: total.item(),
        ce_s: terms.ce_s,
        ce_c: terms.ce_c,
    };
    Ok((total, breakdown))
}

/// Name of the first non-finite term, if any.
pub fn non_finite_term(b: &LossBreakdown) -> Option<&'static str> {
    [
        ("L_s", b.l_s),
        ("L_c", b.l_c),
        ("L_cf", b.l_cf),
        ("L_HSIC", b.l_hsic),
        ("total", b.total),
    ]
    .into_iter()
    .find(|(_, v)| !v.is_finite())
    .map(|(name, _)| name)
}
