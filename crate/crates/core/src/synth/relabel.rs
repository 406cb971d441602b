use rand::seq::SliceRandom;

use super::rng;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Rounds without an increase in h_L after which relabeling stops.
pub const STALL_ROUNDS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct RelabelOutcome {
    pub graph: Graph,
    /// False when a target was given and not met.
    pub reached: bool,
    /// h_L before the first round, then after every round.
    pub history: Vec<f64>,
}

impl RelabelOutcome {
    pub fn final_heterophily(&self) -> f64 {
        *self.history.last().expect("history holds the initial value")
    }
}

/// Greedy sweeps that give each node, in seeded random order, the class
/// held by the fewest of its neighbors (lowest id on ties). Stops as soon
/// as `target` is met, or after [`STALL_ROUNDS`] rounds without gain.
pub fn relabel_to_heterophily(g: &Graph, target: Option<f64>, seed: u64) -> Result<RelabelOutcome> {
    if g.num_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let c = g.num_classes();
    if c < 2 {
        return Err(Error::InvalidConfig("relabeling needs at least 2 classes".into()));
    }
    let m = g.num_edges() as f64;
    let mut labels = g.labels().to_vec();
    let mut hetero = g.edges().iter().filter(|&&(u, v)| labels[u] != labels[v]).count();
    let mut history = vec![hetero as f64 / m];
    let met = |h: usize| target.is_some_and(|t| h as f64 / m >= t);

    let mut rng = rng(seed);
    let mut order: Vec<usize> = (0..g.num_nodes()).collect();
    let mut counts = vec![0usize; c];
    let mut stalled = 0;
    let mut done = met(hetero);
    while !done && stalled < STALL_ROUNDS {
        let before = hetero;
        order.shuffle(&mut rng);
        for &i in &order {
            counts.fill(0);
            for j in g.neighbors(i) {
                counts[labels[j]] += 1;
            }
            let best = (0..c).min_by_key(|&k| (counts[k], k)).expect("c >= 2");
            hetero = hetero + counts[labels[i]] - counts[best];
            labels[i] = best;
            if met(hetero) {
                done = true;
                break;
            }
        }
        history.push(hetero as f64 / m);
        stalled = if hetero > before { 0 } else { stalled + 1 };
    }
    Ok(RelabelOutcome {
        graph: g.with_labels(labels)?,
        reached: target.is_none_or(|t| hetero as f64 / m >= t),
        history,
    })
}
