//! GCN encoder, ego-plus-mean readout and softmax heads, all built on the
//! tape so the same code serves training and evaluation.
//!
//! Each layer aggregates `(I + A ⊙ M) H W + b`, where `M` is the edge mask,
//! optionally normalized by the masked degree plus one (mean) or its square
//! roots (symmetric). With a zero mask every node keeps only its own row, so
//! the encoder degenerates to a per-node MLP.

mod batch;

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use batch::GraphBatch;

/// Whether dropout is active, and the seed of its masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

/// Neighborhood operator of a GCN layer; `d` is the masked degree plus one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `I + A ⊙ M`. Keeps degree information when features are constant.
    #[default]
    Sum,
    /// `D^-1 (I + A ⊙ M)`, the renormalized propagation of the graph module.
    Mean,
    /// `D^-1/2 (I + A ⊙ M) D^-1/2`.
    Symmetric,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            "symmetric" => Ok(Aggregation::Symmetric),
            other => Err(Error::InvalidConfig(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gcn {
    pub weights: Vec<ParamId>,
    /// `1 x hidden` per layer, zero-initialised.
    pub biases: Vec<ParamId>,
    pub dropout: f64,
    pub aggregation: Aggregation,
}

impl Gcn {
    /// `layers` Glorot-initialised weights, `in_dim -> hidden -> ... -> hidden`,
    /// each followed by a bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layers == 0 || hidden == 0 || in_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "GCN needs positive sizes, got in={in_dim} hidden={hidden} layers={layers}"
            )));
        }
        let weights = (0..layers)
            .map(|l| {
                let rows = if l == 0 { in_dim } else { hidden };
                store.add_glorot(format!("{name}.w{l}"), rows, hidden, rng)
            })
            .collect();
        let biases = (0..layers)
            .map(|l| store.add(format!("{name}.b{l}"), Matrix::zeros(1, hidden)))
            .collect();
        Ok(Gcn {
            weights,
            biases,
            dropout,
            aggregation: Aggregation::default(),
        })
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn out_dim(&self, store: &ParamStore) -> usize {
        store.get(*self.weights.last().expect("at least one layer")).cols()
    }

    /// Node embeddings of the batch. `edge_mask` is `E x 1` over undirected
    /// edges and `feature_mask` broadcasts against the `n x d` features;
    /// `None` means all ones.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &Bound<'t>,
        batch: &GraphBatch,
        edge_mask: Option<Var<'t>>,
        feature_mask: Option<Var<'t>>,
        mode: Mode,
    ) -> Result<Var<'t>> {
        let mut states = self.forward_layers(tape, params, batch, edge_mask, feature_mask, mode)?;
        Ok(states.pop().expect("input plus at least one layer"))
    }

    /// The (masked) input followed by the output of every layer.
    pub fn forward_layers<'t>(
        &self,
        tape: &'t Tape,
        params: &Bound<'t>,
        batch: &GraphBatch,
        edge_mask: Option<Var<'t>>,
        feature_mask: Option<Var<'t>>,
        mode: Mode,
    ) -> Result<Vec<Var<'t>>> {
        let mut h = tape.constant(batch.features.clone());
        if let Some(fm) = feature_mask {
            h = h.mul(fm)?;
        }
        let prop = Propagation::new(tape, batch, edge_mask, self.aggregation)?;
        let last = self.weights.len() - 1;
        let mut states = Vec::with_capacity(self.weights.len() + 1);
        states.push(h);
        for (l, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = prop.apply(h.matmul(params.get(w))?)?.add(params.get(b))?;
            if l < last {
                h = h.relu();
                if let Mode::Train { seed } = mode {
                    h = h.dropout(self.dropout, seed.wrapping_add(l as u64))?;
                }
            }
            states.push(h);
        }
        Ok(states)
    }
}

/// Per-batch propagation coefficients, shared by all layers.
struct Propagation<'t> {
    batch_src: Rc<Vec<usize>>,
    batch_dst: Rc<Vec<usize>>,
    n: usize,
    coef: Var<'t>,
    self_coef: Var<'t>,
}

impl<'t> Propagation<'t> {
    fn new(tape: &'t Tape, batch: &GraphBatch, edge_mask: Option<Var<'t>>, agg: Aggregation) -> Result<Self> {
        let n = batch.num_nodes;
        let m = match edge_mask {
            Some(mask) => {
                if mask.shape() != (batch.num_edges(), 1) {
                    return Err(Error::ShapeMismatch {
                        op: "edge_mask",
                        lhs: mask.shape(),
                        rhs: (batch.num_edges(), 1),
                    });
                }
                mask.gather_rows(Rc::clone(&batch.undirected))?
            }
            None => tape.constant(Matrix::ones(batch.src.len(), 1)),
        };
        let deg = || -> Result<Var<'t>> { Ok(m.scatter_add_rows(Rc::clone(&batch.dst), n)?.affine(1.0, 1.0)) };
        let (coef, self_coef) = match agg {
            Aggregation::Sum => (m, tape.constant(Matrix::ones(n, 1))),
            Aggregation::Mean => {
                let inv = deg()?.powf(-1.0)?;
                (m.mul(inv.gather_rows(Rc::clone(&batch.dst))?)?, inv)
            }
            Aggregation::Symmetric => {
                let s = deg()?.powf(-0.5)?;
                let coef = m
                    .mul(s.gather_rows(Rc::clone(&batch.src))?)?
                    .mul(s.gather_rows(Rc::clone(&batch.dst))?)?;
                (coef, s.mul(s)?)
            }
        };
        Ok(Propagation {
            batch_src: Rc::clone(&batch.src),
            batch_dst: Rc::clone(&batch.dst),
            n,
            coef,
            self_coef,
        })
    }

    fn apply(&self, hw: Var<'t>) -> Result<Var<'t>> {
        let msg = hw.gather_rows(Rc::clone(&self.batch_src))?.mul(self.coef)?;
        let agg = msg.scatter_add_rows(Rc::clone(&self.batch_dst), self.n)?;
        agg.add(hw.mul(self.self_coef)?)
    }
}

/// Concatenation of the ego row and the segment mean, mapped `2d -> d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub weight: ParamId,
}

impl Readout {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        Readout {
            weight: store.add_glorot(format!("{name}.w"), 2 * dim, dim, rng),
        }
    }

    /// One row per segment.
    pub fn forward<'t>(&self, params: &Bound<'t>, nodes: Var<'t>, batch: &GraphBatch) -> Result<Var<'t>> {
        if batch.segment_sizes.contains(&0) {
            return Err(Error::InvalidGraph("readout of an empty subgraph".into()));
        }
        let ego = nodes.gather_rows(Rc::clone(&batch.egos))?;
        let inv: Vec<f64> = batch.segment_sizes.iter().map(|&s| 1.0 / s as f64).collect();
        let mean = nodes
            .scatter_add_rows(Rc::clone(&batch.segment), batch.num_graphs())?
            .mul(nodes.tape().constant(Matrix::column(&inv)))?;
        ego.concat_cols(mean)?.matmul(params.get(self.weight))
    }
}

/// Linear map plus bias followed by a row softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Head {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Head {
            weight: store.add_glorot(format!("{name}.w"), dim, classes, rng),
            bias: store.add(format!("{name}.b"), Matrix::zeros(1, classes)),
        }
    }

    pub fn probs<'t>(&self, params: &Bound<'t>, h: Var<'t>) -> Result<Var<'t>> {
        Ok(h
            .matmul(params.get(self.weight))?
            .add(params.get(self.bias))?
            .softmax_rows())
    }
}

/// Row-wise argmax with ties going to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (k, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Cross-entropy of each row of `probs` at its target, as an `n x 1` column.
pub fn cross_entropy_rows<'t>(probs: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let (n, c) = probs.shape();
    if labels.len() != n || labels.iter().any(|&y| y >= c) {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            lhs: (n, c),
            rhs: (labels.len(), 1),
        });
    }
    let onehot = one_hot(labels, c);
    Ok(probs
        .mul(probs.tape().constant(onehot))?
        .row_sums()
        .ln()
        .scale(-1.0))
}

pub(crate) fn one_hot(labels: &[usize], c: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), c);
    for (i, &y) in labels.iter().enumerate() {
        m[(i, y)] = 1.0;
    }
    m
}
