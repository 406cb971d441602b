use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::gnn::GraphBatch;
use crate::graph::Graph;
use crate::matrix::Matrix;

/// Learnable structure and feature masks. The structure mask comes from a
/// two-layer scorer on the concatenated endpoint features, averaged over
/// both endpoint orders; the feature mask is one shared logit per input
/// dimension. Both start at exactly 0.5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPair {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub feature_logits: ParamId,
}

/// Materialized masks of one batch.
#[derive(Clone, Copy)]
pub struct Masks<'t> {
    /// `E x 1` over the batch's undirected edges.
    pub edge: Var<'t>,
    /// `1 x d`.
    pub feature: Var<'t>,
}

impl<'t> Masks<'t> {
    pub fn edge_complement(&self) -> Var<'t> {
        self.edge.complement()
    }

    pub fn feature_complement(&self) -> Var<'t> {
        self.feature.complement()
    }
}

impl MaskPair {
    pub fn new(store: &mut ParamStore, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        MaskPair {
            w1: store.add_glorot("mask.w1", 2 * in_dim, hidden, rng),
            b1: store.add("mask.b1", Matrix::zeros(1, hidden)),
            w2: store.add("mask.w2", Matrix::zeros(hidden, 1)),
            b2: store.add("mask.b2", Matrix::zeros(1, 1)),
            feature_logits: store.add("mask.feature", Matrix::zeros(1, in_dim)),
        }
    }

    pub fn materialize<'t>(&self, tape: &'t Tape, params: &Bound<'t>, batch: &GraphBatch) -> Result<Masks<'t>> {
        let (us, vs): (Vec<usize>, Vec<usize>) = batch.edges.iter().copied().unzip();
        let edge = self.edge_mask(tape, params, &batch.features, us, vs)?;
        Ok(Masks {
            edge,
            feature: params.get(self.feature_logits).sigmoid(),
        })
    }

    fn edge_mask<'t>(
        &self,
        tape: &'t Tape,
        params: &Bound<'t>,
        features: &Matrix,
        us: Vec<usize>,
        vs: Vec<usize>,
    ) -> Result<Var<'t>> {
        let x = tape.constant(features.clone());
        let xu = x.gather_rows(Rc::new(us))?;
        let xv = x.gather_rows(Rc::new(vs))?;
        let a = self.logit(params, xu.concat_cols(xv)?)?;
        let b = self.logit(params, xv.concat_cols(xu)?)?;
        Ok(a.add(b)?.scale(0.5).sigmoid())
    }

    fn logit<'t>(&self, params: &Bound<'t>, input: Var<'t>) -> Result<Var<'t>> {
        input
            .matmul(params.get(self.w1))?
            .add(params.get(self.b1))?
            .relu()
            .matmul(params.get(self.w2))?
            .add(params.get(self.b2))
    }

    /// Structure-mask value of every edge of `g`, indexed by edge id.
    pub fn edge_scores(&self, store: &ParamStore, g: &Graph) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let params = store.bind(&tape);
        let (us, vs): (Vec<usize>, Vec<usize>) = g.edges().iter().copied().unzip();
        Ok(self.edge_mask(&tape, &params, g.features(), us, vs)?.value().into_vec())
    }

    pub fn feature_mask(&self, store: &ParamStore) -> Vec<f64> {
        store
            .get(self.feature_logits)
            .as_slice()
            .iter()
            .map(|&z| crate::autodiff::sigmoid(z))
            .collect()
    }
}
