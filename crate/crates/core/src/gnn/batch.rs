use std::rc::Rc;

use crate::graph::{EgoSubgraph, Graph};
use crate::matrix::Matrix;

/// A disjoint union of subgraphs laid out for gather/scatter propagation.
///
/// Every undirected edge appears twice in `src`/`dst`; `undirected[k]` is the
/// undirected edge behind directed edge `k`.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub num_nodes: usize,
    pub features: Matrix,
    /// Undirected edges as local row pairs `(u, v)` with `u < v`.
    pub edges: Vec<(usize, usize)>,
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    pub undirected: Rc<Vec<usize>>,
    /// Subgraph index of every row.
    pub segment: Rc<Vec<usize>>,
    /// Row of each subgraph's ego node.
    pub egos: Rc<Vec<usize>>,
    pub segment_sizes: Vec<usize>,
    /// Parent-graph node id of every row.
    pub original_nodes: Vec<usize>,
    /// Parent-graph edge id of every undirected edge.
    pub original_edges: Vec<usize>,
}

impl GraphBatch {
    pub fn from_egos<'a>(subgraphs: impl IntoIterator<Item = &'a EgoSubgraph>) -> Self {
        let subgraphs: Vec<&EgoSubgraph> = subgraphs.into_iter().collect();
        let n: usize = subgraphs.iter().map(|s| s.graph.num_nodes()).sum();
        let d = subgraphs.first().map_or(0, |s| s.graph.feature_dim());
        let mut b = Builder::new(n, d);
        for s in subgraphs {
            b.push(&s.graph, 0, &s.original_ids, &s.original_edges);
        }
        b.finish()
    }

    /// The whole graph as a single segment with node 0 as its nominal ego.
    pub fn whole(g: &Graph) -> Self {
        let mut b = Builder::new(g.num_nodes(), g.feature_dim());
        let ids: Vec<usize> = (0..g.num_nodes()).collect();
        let eids: Vec<usize> = (0..g.num_edges()).collect();
        b.push(g, 0, &ids, &eids);
        b.finish()
    }

    pub fn num_graphs(&self) -> usize {
        self.egos.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

struct Builder {
    features: Matrix,
    rows: usize,
    edges: Vec<(usize, usize)>,
    segment: Vec<usize>,
    egos: Vec<usize>,
    sizes: Vec<usize>,
    nodes: Vec<usize>,
    original_edges: Vec<usize>,
}

impl Builder {
    fn new(n: usize, d: usize) -> Self {
        Builder {
            features: Matrix::zeros(n, d),
            rows: 0,
            edges: Vec::new(),
            segment: Vec::with_capacity(n),
            egos: Vec::new(),
            sizes: Vec::new(),
            nodes: Vec::with_capacity(n),
            original_edges: Vec::new(),
        }
    }

    fn push(&mut self, g: &Graph, ego: usize, ids: &[usize], eids: &[usize]) {
        let off = self.rows;
        let seg = self.egos.len();
        for i in 0..g.num_nodes() {
            self.features.row_mut(off + i).copy_from_slice(g.features().row(i));
        }
        self.edges.extend(g.edges().iter().map(|&(u, v)| (off + u, off + v)));
        self.segment.extend(std::iter::repeat_n(seg, g.num_nodes()));
        self.egos.push(off + ego);
        self.sizes.push(g.num_nodes());
        self.nodes.extend_from_slice(ids);
        self.original_edges.extend_from_slice(eids);
        self.rows += g.num_nodes();
    }

    fn finish(self) -> GraphBatch {
        let mut src = Vec::with_capacity(2 * self.edges.len());
        let mut dst = Vec::with_capacity(2 * self.edges.len());
        let mut undirected = Vec::with_capacity(2 * self.edges.len());
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            src.extend([u, v]);
            dst.extend([v, u]);
            undirected.extend([k, k]);
        }
        GraphBatch {
            num_nodes: self.rows,
            features: self.features,
            edges: self.edges,
            src: Rc::new(src),
            dst: Rc::new(dst),
            undirected: Rc::new(undirected),
            segment: Rc::new(self.segment),
            egos: Rc::new(self.egos),
            segment_sizes: self.sizes,
            original_nodes: self.nodes,
            original_edges: self.original_edges,
        }
    }
}
