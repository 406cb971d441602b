use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate, rng, Annotation, BaseKind, GenConfig, Generated, MotifLabeling, MotifSpec};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

pub const FEATURE_DIM: usize = 10;
const BA_COMMUNITY_LINKS: usize = 350;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    TreeCycles,
    TreeGrid,
    BaShapes,
    BaCommunity,
}

pub const PRESETS: [Preset; 4] = [Preset::TreeCycles, Preset::TreeGrid, Preset::BaShapes, Preset::BaCommunity];

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::TreeCycles => "tree_cycles",
            Preset::TreeGrid => "tree_grid",
            Preset::BaShapes => "ba_shapes",
            Preset::BaCommunity => "ba_community",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PRESETS
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Generator configuration behind a preset. BA-Community is two BA-Shapes
/// graphs, so its config is the BA-Shapes one.
pub fn preset_config(preset: Preset, seed: u64) -> GenConfig {
    let tree = BaseKind::Tree { nodes: 511 };
    let ba = BaseKind::BarabasiAlbert { nodes: 300, m: 5 };
    match preset {
        Preset::TreeCycles => GenConfig {
            base: tree,
            base_label: 0,
            motif: MotifSpec::cycle(6, MotifLabeling::Uniform(1)),
            motif_count: 60,
            attach_at: 0,
            noise_edges: 45,
            feature_dim: FEATURE_DIM,
            seed,
        },
        Preset::TreeGrid => GenConfig {
            base: tree,
            base_label: 0,
            motif: MotifSpec::grid(3, 3, MotifLabeling::Uniform(1)),
            motif_count: 80,
            attach_at: 0,
            noise_edges: 15,
            feature_dim: FEATURE_DIM,
            seed,
        },
        Preset::BaShapes | Preset::BaCommunity => GenConfig {
            base: ba,
            base_label: 0,
            motif: MotifSpec::house(),
            motif_count: 80,
            attach_at: 3,
            noise_edges: 20,
            feature_dim: FEATURE_DIM,
            seed,
        },
    }
}

pub fn preset(preset: Preset, seed: u64) -> Result<Generated> {
    match preset {
        Preset::BaCommunity => ba_community(seed),
        p => generate(&preset_config(p, seed)),
    }
}

fn ba_community(seed: u64) -> Result<Generated> {
    let mut master = rng(seed);
    let a = generate(&preset_config(Preset::BaShapes, master.random()))?;
    let b = generate(&preset_config(Preset::BaShapes, master.random()))?;
    let (na, nb) = (a.graph.num_nodes(), b.graph.num_nodes());
    let classes = a.graph.num_classes();
    let n = na + nb;

    let mut edges: Vec<(usize, usize)> = a.graph.edges().to_vec();
    edges.extend(b.graph.edges().iter().map(|&(u, v)| (u + na, v + na)));
    let mut links = std::collections::BTreeSet::new();
    while links.len() < BA_COMMUNITY_LINKS {
        links.insert((master.random_range(0..na), na + master.random_range(0..nb)));
    }
    edges.extend(links);

    let mut labels = a.graph.labels().to_vec();
    labels.extend(b.graph.labels().iter().map(|&y| y + classes));
    let mut features = Matrix::ones(n, FEATURE_DIM);
    for i in na..n {
        for x in &mut features.row_mut(i)[..FEATURE_DIM / 2] {
            *x = 2.0;
        }
    }
    let offset_motifs = a.annotation.blocks.iter().copied().max().unwrap_or(0);
    let mut blocks = a.annotation.blocks;
    blocks.extend(
        b.annotation
            .blocks
            .iter()
            .map(|&blk| if blk == 0 { 0 } else { blk + offset_motifs }),
    );
    Ok(Generated {
        graph: Graph::new(n, 2 * classes, edges, features, labels)?,
        annotation: Annotation { blocks },
    })
}
