//! Shared generators for randomized suites.

use consensus_core::edge::AgentDynamics;
use consensus_core::graph::{build_graph, NetworkGraph};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random connected graph: a random spanning tree plus a random subset of
/// the remaining pairs.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, min_nodes: usize, max_nodes: usize) -> NetworkGraph {
    let n = rng.random_range(min_nodes..=max_nodes);
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        let (a, b) = (order[i], order[j]);
        edges.push((a.min(b), a.max(b)));
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            if !edges.contains(&(i, j)) && rng.random_bool(0.3) {
                edges.push((i, j));
            }
        }
    }
    build_graph(n, &edges).unwrap()
}

/// Random strictly stable single-input agent with spectral abscissa at most
/// `-margin`.
pub fn random_stable_agent(rng: &mut ChaCha8Rng, max_dim: usize, margin: f64) -> AgentDynamics {
    let n = rng.random_range(1..=max_dim);
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let abscissa = r
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let a = r - DMatrix::identity(n, n) * (abscissa + margin);
    let mut b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    if b.norm() < 0.1 {
        b[(0, 0)] += 1.0;
    }
    AgentDynamics::new(a, b).unwrap()
}
