//! Seeded synthetic benchmarks: a base graph (tree or Barabási–Albert) with
//! motifs attached by random edges, the four named presets, iterative
//! heterophily relabeling and a planted-shortcut fixture with known
//! causal and shortcut edge sets.

mod motif;
mod planted;
mod presets;
mod relabel;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

pub use motif::{MotifKind, MotifLabeling, MotifSpec};
pub use planted::{planted_shortcut, PlantedConfig, PlantedShortcut};
pub use presets::{preset, preset_config, Preset, PRESETS};
pub use relabel::{relabel_to_heterophily, RelabelOutcome, STALL_ROUNDS};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    /// Complete binary tree in heap order: node `i > 0` hangs off `(i - 1) / 2`.
    Tree { nodes: usize },
    /// Preferential attachment from an `(m + 1)`-clique, `m` edges per new node.
    BarabasiAlbert { nodes: usize, m: usize },
}

impl BaseKind {
    pub fn nodes(&self) -> usize {
        match *self {
            BaseKind::Tree { nodes } | BaseKind::BarabasiAlbert { nodes, .. } => nodes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub base: BaseKind,
    /// Class of every base node.
    pub base_label: usize,
    pub motif: MotifSpec,
    pub motif_count: usize,
    /// Motif position that receives the attachment edge from a uniformly
    /// drawn base node.
    pub attach_at: usize,
    /// Extra uniformly random edges added after attachment.
    pub noise_edges: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.motif.validate()?;
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.motif_count == 0 {
            return fail("motif count must be at least 1".into());
        }
        if self.base.nodes() < self.motif.size() {
            return fail(format!(
                "base size {} is smaller than the motif size {}",
                self.base.nodes(),
                self.motif.size()
            ));
        }
        if self.attach_at >= self.motif.size() {
            return fail(format!("attachment position {} outside the motif", self.attach_at));
        }
        if self.feature_dim == 0 {
            return fail("feature dimension must be positive".into());
        }
        if let BaseKind::BarabasiAlbert { nodes, m } = self.base {
            if m == 0 || m >= nodes {
                return fail(format!("Barabási–Albert needs 0 < m < n, got m={m}, n={nodes}"));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.motif.labeling.max_class().max(self.base_label) + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.base.nodes() + self.motif_count * self.motif.size()
    }
}

/// Block membership of every node: 0 for the base, `k + 1` for motif `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub blocks: Vec<usize>,
}

impl Annotation {
    pub fn motif_nodes(&self, motif: usize) -> impl Iterator<Item = usize> + '_ {
        self.blocks
            .iter()
            .enumerate()
            .filter(move |(_, &b)| b == motif + 1)
            .map(|(i, _)| i)
    }

    /// The sidecar JSON object `{"node_id": block_id, ...}`.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<String, usize> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, &b)| (i.to_string(), b))
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: BTreeMap<String, usize> = serde_json::from_str(s)?;
        let mut blocks = vec![None; map.len()];
        for (k, b) in map {
            let i: usize = k
                .parse()
                .map_err(|_| Error::InvalidGraph(format!("annotation key {k:?} is not a node id")))?;
            let slot = blocks
                .get_mut(i)
                .ok_or_else(|| Error::InvalidGraph(format!("annotation node {i} out of range")))?;
            *slot = Some(b);
        }
        Ok(Annotation {
            blocks: blocks.into_iter().map(|b| b.expect("keys are distinct and in range")).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub graph: Graph,
    pub annotation: Annotation,
}

/// Builds the base, attaches `motif_count` motifs and adds noise edges.
/// Every node gets the all-ones feature vector.
pub fn generate(config: &GenConfig) -> Result<Generated> {
    config.validate()?;
    let mut rng = rng(config.seed);
    let n = config.num_nodes();
    let base_n = config.base.nodes();
    let mut edges = match config.base {
        BaseKind::Tree { nodes } => tree_edges(nodes),
        BaseKind::BarabasiAlbert { nodes, m } => barabasi_albert_edges(nodes, m, &mut rng),
    };
    let mut labels = vec![config.base_label; base_n];
    let mut blocks = vec![0; base_n];
    let size = config.motif.size();
    for k in 0..config.motif_count {
        let offset = base_n + k * size;
        edges.extend(config.motif.edges().into_iter().map(|(a, b)| (offset + a, offset + b)));
        labels.extend((0..size).map(|p| config.motif.labeling.class_at(p)));
        blocks.extend(std::iter::repeat_n(k + 1, size));
        edges.push((rng.random_range(0..base_n), offset + config.attach_at));
    }
    add_noise_edges(&mut edges, n, config.noise_edges, &mut rng)?;

    let graph = Graph::new(
        n,
        config.num_classes(),
        edges,
        Matrix::ones(n, config.feature_dim),
        labels,
    )?;
    Ok(Generated {
        graph,
        annotation: Annotation { blocks },
    })
}

pub(crate) fn tree_edges(nodes: usize) -> Vec<(usize, usize)> {
    (1..nodes).map(|i| ((i - 1) / 2, i)).collect()
}

pub(crate) fn barabasi_albert_edges(nodes: usize, m: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    // each endpoint occurrence, so uniform draws are degree-proportional
    let mut ends = Vec::new();
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    for v in m + 1..nodes {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(*ends.choose(rng).expect("clique is nonempty"));
        }
        for u in targets {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    edges
}

pub(crate) fn add_noise_edges(
    edges: &mut Vec<(usize, usize)>,
    n: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let mut present: BTreeSet<(usize, usize)> = edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    if present.len() + count > n * (n - 1) / 2 {
        return Err(Error::InvalidConfig(format!("cannot add {count} noise edges to {n} nodes")));
    }
    let mut added = 0;
    while added < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && present.insert((u.min(v), u.max(v))) {
            edges.push((u, v));
            added += 1;
        }
    }
    Ok(())
}
