use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rng;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

/// Disjoint units, each an ego node with `causal_leaves` pendant leaves and
/// a `shortcut_size`-clique fully joined to the ego. All nodes of a unit
/// share its label. Leaf `k` carries a class `a_k` one-hot in the causal
/// block, with `y = (a_1 + ... + a_m) mod C`, so the label is a
/// deterministic but nonlinear function of the leaves. Clique nodes carry a
/// shortcut class one-hot in the shortcut block, equal to the label with
/// probability `shortcut_agreement` and a uniformly drawn other class
/// otherwise. Three trailing role columns mark ego, leaf and
/// clique nodes.
///
/// The last `shifted_fraction` of the units are shifted: their shortcut
/// class is drawn uniformly and independently of the label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub units: usize,
    pub num_classes: usize,
    pub causal_leaves: usize,
    pub shortcut_size: usize,
    pub shortcut_agreement: f64,
    pub shifted_fraction: f64,
    /// Standard deviation of Gaussian noise added to every feature entry.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            units: 60,
            num_classes: 2,
            causal_leaves: 2,
            shortcut_size: 3,
            shortcut_agreement: 0.9,
            shifted_fraction: 0.5,
            feature_noise: 0.0,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn unit_size(&self) -> usize {
        1 + self.causal_leaves + self.shortcut_size
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.num_classes + 3
    }

    pub fn shifted_units(&self) -> usize {
        (self.units as f64 * self.shifted_fraction).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let ok = self.units >= 1
            && self.num_classes >= 2
            && self.causal_leaves >= 1
            && self.shortcut_size >= 1
            && (0.0..=1.0).contains(&self.shortcut_agreement)
            && (0.0..=1.0).contains(&self.shifted_fraction)
            && self.feature_noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid planted-shortcut config {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedShortcut {
    pub graph: Graph,
    /// Edge ids of ego-leaf edges.
    pub causal_edges: BTreeSet<usize>,
    /// Edge ids inside the clique and between clique and ego.
    pub shortcut_edges: BTreeSet<usize>,
    pub egos: Vec<usize>,
    pub unit_of: Vec<usize>,
    pub shortcut_class: Vec<usize>,
    /// Per unit.
    pub shifted: Vec<bool>,
}

impl PlantedShortcut {
    /// Nodes of unshifted and of shifted units.
    pub fn node_pools(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.graph.num_nodes()).partition(|&i| !self.shifted[self.unit_of[i]])
    }
}

pub fn planted_shortcut(config: &PlantedConfig) -> Result<PlantedShortcut> {
    config.validate()?;
    let mut rng = rng(config.seed);
    let c = config.num_classes;
    let size = config.unit_size();
    let n = config.units * size;
    let (leaf_role, motif_role, ego_role) = (2 * c + 1, 2 * c + 2, 2 * c);
    let mut features = Matrix::zeros(n, config.feature_dim());
    let mut labels = Vec::with_capacity(n);
    let mut causal = Vec::new();
    let mut shortcut = Vec::new();
    let mut egos = Vec::new();
    let mut unit_of = Vec::with_capacity(n);
    let mut shortcut_class = Vec::new();
    let first_shifted = config.units - config.shifted_units();
    let shifted: Vec<bool> = (0..config.units).map(|u| u >= first_shifted).collect();

    for u in 0..config.units {
        let y = rng.random_range(0..c);
        let s = if shifted[u] {
            rng.random_range(0..c)
        } else if rng.random_bool(config.shortcut_agreement) {
            y
        } else {
            (y + rng.random_range(1..c)) % c
        };
        let ego = u * size;
        let leaves = ego + 1..ego + 1 + config.causal_leaves;
        let motif = leaves.end..ego + size;

        features[(ego, ego_role)] = 1.0;
        let mut rest = y;
        for (k, l) in leaves.enumerate() {
            let a = if k + 1 == config.causal_leaves {
                rest
            } else {
                rng.random_range(0..c)
            };
            rest = (rest + c - a) % c;
            features[(l, a)] = 1.0;
            features[(l, leaf_role)] = 1.0;
            causal.push((ego, l));
        }
        for a in motif.clone() {
            features[(a, c + s)] = 1.0;
            features[(a, motif_role)] = 1.0;
            shortcut.push((ego, a));
            for b in a + 1..motif.end {
                shortcut.push((a, b));
            }
        }
        labels.extend(std::iter::repeat_n(y, size));
        unit_of.extend(std::iter::repeat_n(u, size));
        egos.push(ego);
        shortcut_class.push(s);
    }
    if config.feature_noise > 0.0 {
        let noise = Normal::new(0.0, config.feature_noise).expect("finite std");
        for x in features.as_mut_slice() {
            *x += noise.sample(&mut rng);
        }
    }

    let graph = Graph::new(n, c, causal.iter().chain(&shortcut).copied(), features, labels)?;
    let ids = |pairs: &[(usize, usize)]| -> BTreeSet<usize> {
        pairs
            .iter()
            .map(|&(a, b)| graph.edge_id(a, b).expect("edge was inserted"))
            .collect()
    };
    Ok(PlantedShortcut {
        causal_edges: ids(&causal),
        shortcut_edges: ids(&shortcut),
        graph,
        egos,
        unit_of,
        shortcut_class,
        shifted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ego_subgraph;

    #[test]
    fn edge_sets_partition_the_graph() {
        let p = planted_shortcut(&PlantedConfig::default()).unwrap();
        let cfg = PlantedConfig::default();
        assert_eq!(p.causal_edges.len(), cfg.units * cfg.causal_leaves);
        assert_eq!(p.shortcut_edges.len(), cfg.units * (3 + 3));
        assert!(p.causal_edges.is_disjoint(&p.shortcut_edges));
        assert_eq!(p.causal_edges.len() + p.shortcut_edges.len(), p.graph.num_edges());
    }

    #[test]
    fn causal_lookup_is_perfect() {
        let cfg = PlantedConfig::default();
        let p = planted_shortcut(&cfg).unwrap();
        let g = &p.graph;
        let class_of = |leaf: usize| {
            let row = &g.features().row(leaf)[..cfg.num_classes];
            (0..cfg.num_classes).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
        };
        let mut single_leaf_hits = 0;
        for i in 0..g.num_nodes() {
            let ego = p.egos[p.unit_of[i]];
            let leaves = ego + 1..ego + 1 + cfg.causal_leaves;
            let guess = leaves.clone().map(class_of).sum::<usize>() % cfg.num_classes;
            assert_eq!(guess, g.labels()[i]);
            single_leaf_hits += usize::from(class_of(ego + 1) == g.labels()[i]);
        }
        // no single leaf gives the label away
        let rate = single_leaf_hits as f64 / g.num_nodes() as f64;
        assert!((0.3..0.7).contains(&rate), "{rate}");
    }

    #[test]
    fn every_node_sees_its_unit_within_two_hops() {
        let cfg = PlantedConfig {
            units: 3,
            ..PlantedConfig::default()
        };
        let p = planted_shortcut(&cfg).unwrap();
        for i in 0..p.graph.num_nodes() {
            assert_eq!(ego_subgraph(&p.graph, i, 2).graph.num_nodes(), cfg.unit_size());
        }
    }

    #[test]
    fn agreement_extremes() {
        let always = planted_shortcut(&PlantedConfig {
            shortcut_agreement: 1.0,
            shifted_fraction: 0.0,
            ..PlantedConfig::default()
        })
        .unwrap();
        let never = planted_shortcut(&PlantedConfig {
            shortcut_agreement: 0.0,
            shifted_fraction: 0.0,
            ..PlantedConfig::default()
        })
        .unwrap();
        for (k, &ego) in always.egos.iter().enumerate() {
            assert_eq!(always.shortcut_class[k], always.graph.labels()[ego]);
            assert_ne!(never.shortcut_class[k], never.graph.labels()[never.egos[k]]);
        }
    }

    #[test]
    fn shifted_units_carry_no_label_information() {
        let cfg = PlantedConfig {
            units: 4000,
            num_classes: 2,
            shifted_fraction: 0.5,
            ..PlantedConfig::default()
        };
        let p = planted_shortcut(&cfg).unwrap();
        assert_eq!(p.shifted.iter().filter(|&&s| s).count(), 2000);
        // empirical mutual information between shortcut and label, in nats
        let mut joint = [[0.0_f64; 2]; 2];
        for k in (0..cfg.units).filter(|&k| p.shifted[k]) {
            joint[p.graph.labels()[p.egos[k]]][p.shortcut_class[k]] += 1.0 / 2000.0;
        }
        let py = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
        let ps = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
        let mi: f64 = (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| joint[a][b] * (joint[a][b] / (py[a] * ps[b])).ln())
            .sum();
        assert!(mi < 2e-3, "{mi}");
        let (inside, outside) = p.node_pools();
        assert_eq!(inside.len(), outside.len());
    }

    #[test]
    fn seeded() {
        let a = planted_shortcut(&PlantedConfig::default()).unwrap();
        let b = planted_shortcut(&PlantedConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
