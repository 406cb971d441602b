//! Undirected attributed graphs, heterophily ratios, the renormalized
//! propagation operator and subgraph-induced neighbor partitions.
//!
//! Edges are stored once as `(u, v)` with `u < v`, sorted. Self-pairs are
//! never stored; operators that need the self term add it explicitly.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<usize>,
    // neighbor id and the index of the connecting edge, sorted by neighbor
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// On-disk JSON representation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Graph {
    /// Validates and builds a graph. Edges may be given in either
    /// orientation but each unordered pair must appear once.
    pub fn new(
        num_nodes: usize,
        num_classes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {y} of node {i} is out of range for {num_classes} classes"
            )));
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::new();
        for (k, (u, v)) in edges.into_iter().enumerate() {
            if u == v {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} [{u},{v}]: self-loop not allowed"
                )));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} [{u},{v}] references a node >= {num_nodes}"
                )));
            }
            let e = (u.min(v), u.max(v));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} [{u},{v}] duplicates an earlier edge"
                )));
            }
            normalized.push(e);
        }
        normalized.sort_unstable();

        let mut adjacency = vec![Vec::new(); num_nodes];
        for (id, &(u, v)) in normalized.iter().enumerate() {
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            num_nodes,
            num_classes,
            edges: normalized,
            features,
            labels,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().map(|&(j, _)| j)
    }

    /// Neighbors of `i` together with the id of the connecting edge.
    pub fn incident(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    /// Id of edge `{u, v}` if present.
    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Graph> {
        Graph::new(
            self.num_nodes,
            self.num_classes,
            self.edges.iter().copied(),
            self.features.clone(),
            labels,
        )
    }

    /// Same graph with another `num_nodes x d` feature matrix.
    pub fn with_features(&self, features: Matrix) -> Result<Graph> {
        Graph::new(
            self.num_nodes,
            self.num_classes,
            self.edges.iter().copied(),
            features,
            self.labels.clone(),
        )
    }

    /// Renames node `i` to `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Graph> {
        assert_eq!(perm.len(), self.num_nodes);
        let mut features = Matrix::zeros(self.num_nodes, self.feature_dim());
        let mut labels = vec![0; self.num_nodes];
        for (old, &new) in perm.iter().enumerate() {
            features.row_mut(new).copy_from_slice(self.features.row(old));
            labels[new] = self.labels[old];
        }
        Graph::new(
            self.num_nodes,
            self.num_classes,
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            features,
            labels,
        )
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            num_nodes: self.num_nodes,
            num_classes: self.num_classes,
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
            features: self.features.to_rows(),
            labels: self.labels.clone(),
        }
    }

    pub fn from_file(file: GraphFile) -> Result<Graph> {
        let features = Matrix::try_from_rows(&file.features)?;
        let features = if file.features.is_empty() {
            Matrix::zeros(0, 0)
        } else {
            features
        };
        Graph::new(
            file.num_nodes,
            file.num_classes,
            file.edges.iter().map(|e| (e[0], e[1])),
            features,
            file.labels,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Graph> {
        Graph::from_file(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Graph> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Graph::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))
    }
}

/// Fraction of edges whose endpoints carry different labels.
pub fn label_heterophily(g: &Graph) -> Result<f64> {
    if g.num_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let mismatched = g
        .edges()
        .iter()
        .filter(|&&(u, v)| g.labels[u] != g.labels[v])
        .count();
    Ok(mismatched as f64 / g.num_edges() as f64)
}

/// Mean cosine dissimilarity `1 - cos(x_u, x_v)` over edges, each term
/// clamped to `[0, 1]`. An edge touching a zero feature vector counts as 1.
pub fn feature_heterophily(g: &Graph) -> Result<f64> {
    if g.num_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let norms: Vec<f64> = (0..g.num_nodes())
        .map(|i| crate::matrix::dot(g.features.row(i), g.features.row(i)).sqrt())
        .collect();
    let total: f64 = g
        .edges()
        .iter()
        .map(|&(u, v)| {
            if norms[u] == 0.0 || norms[v] == 0.0 {
                return 1.0;
            }
            let cos = crate::matrix::dot(g.features.row(u), g.features.row(v)) / (norms[u] * norms[v]);
            (1.0 - cos).clamp(0.0, 1.0)
        })
        .sum();
    Ok(total / g.num_edges() as f64)
}

/// `out_i = (f_i + sum_j r_ij f_j) / (d_i + 1)`.
///
/// `edge_weights` is indexed by edge id and defaults to all ones, in which
/// case the operator is row-stochastic.
pub fn renormalized_propagate(
    g: &Graph,
    f: &Matrix,
    edge_weights: Option<&[f64]>,
) -> Result<Matrix> {
    if f.rows() != g.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "renormalized_propagate",
            lhs: (g.num_nodes(), f.cols()),
            rhs: f.shape(),
        });
    }
    if let Some(w) = edge_weights {
        if w.len() != g.num_edges() {
            return Err(Error::ShapeMismatch {
                op: "renormalized_propagate weights",
                lhs: (g.num_edges(), 1),
                rhs: (w.len(), 1),
            });
        }
    }
    let mut out = f.clone();
    for i in 0..g.num_nodes() {
        let row = out.row_mut(i);
        for &(j, e) in g.incident(i) {
            let r = edge_weights.map_or(1.0, |w| w[e]);
            for (o, &x) in row.iter_mut().zip(f.row(j)) {
                *o += r * x;
            }
        }
        let scale = 1.0 / (g.degree(i) as f64 + 1.0);
        row.iter_mut().for_each(|o| *o *= scale);
    }
    Ok(out)
}

/// Neighbors of one node split by membership in a designated subgraph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodePartition {
    pub node: usize,
    pub subgraph_neighbors: BTreeSet<usize>,
    pub rest_neighbors: BTreeSet<usize>,
}

impl NodePartition {
    pub fn subgraph_degree(&self) -> usize {
        self.subgraph_neighbors.len()
    }

    pub fn rest_degree(&self) -> usize {
        self.rest_neighbors.len()
    }
}

pub fn partition_neighbors(g: &Graph, i: usize, subgraph_nodes: &HashSet<usize>) -> NodePartition {
    let (s, r): (BTreeSet<usize>, BTreeSet<usize>) =
        g.neighbors(i).partition(|j| subgraph_nodes.contains(j));
    NodePartition {
        node: i,
        subgraph_neighbors: s,
        rest_neighbors: r,
    }
}

/// Induced neighborhood of a node, re-indexed so the ego node is 0.
#[derive(Clone, Debug)]
pub struct EgoSubgraph {
    pub graph: Graph,
    /// `original_ids[k]` is the id in the parent graph of sub-node `k`.
    pub original_ids: Vec<usize>,
    /// Hop distance of each sub-node from the ego node.
    pub hop: Vec<usize>,
    /// Parent edge id of each sub-edge, aligned with `graph.edges()`.
    pub original_edges: Vec<usize>,
}

pub fn ego_subgraph(g: &Graph, ego: usize, hops: usize) -> EgoSubgraph {
    let mut local = vec![usize::MAX; g.num_nodes()];
    let mut original_ids = vec![ego];
    let mut hop = vec![0];
    local[ego] = 0;
    let mut queue = VecDeque::from([ego]);
    while let Some(u) = queue.pop_front() {
        let du = hop[local[u]];
        if du == hops {
            continue;
        }
        for v in g.neighbors(u) {
            if local[v] == usize::MAX {
                local[v] = original_ids.len();
                original_ids.push(v);
                hop.push(du + 1);
                queue.push_back(v);
            }
        }
    }

    let mut sub_edges = Vec::new();
    for (k, &u) in original_ids.iter().enumerate() {
        for &(v, _) in g.incident(u) {
            if local[v] != usize::MAX && k < local[v] {
                sub_edges.push((k, local[v]));
            }
        }
    }
    let features = g.features().select_rows(&original_ids);
    let labels = original_ids.iter().map(|&i| g.labels()[i]).collect();
    let graph = Graph::new(original_ids.len(), g.num_classes(), sub_edges, features, labels)
        .expect("induced subgraph of a valid graph is valid");
    let original_edges = graph
        .edges()
        .iter()
        .map(|&(a, b)| g.edge_id(original_ids[a], original_ids[b]).expect("induced edge"))
        .collect();
    EgoSubgraph {
        graph,
        original_ids,
        hop,
        original_edges,
    }
}
