#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdgnn::{Graph, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Erdos-Renyi graph with at least one edge and random features and labels.
pub fn random_graph(seed: u64, max_nodes: usize) -> Graph {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=max_nodes);
    let c = rng.random_range(2..5);
    let d = rng.random_range(1..5);
    let p: f64 = rng.random_range(0.05..0.5);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1));
    }
    let x = random_matrix(&mut rng, n, d, -1.0, 1.0);
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    Graph::new(n, c, edges, x, labels).unwrap()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.shape() == b.shape() && a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= tol)
}
