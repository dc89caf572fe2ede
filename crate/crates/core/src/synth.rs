//! Seeded stochastic-block-model corpora with one-hot node labels. The
//! defaults mimic a sparse protein-graph benchmark: 10 to 40 nodes, mean
//! degree near 3.7, three node-label types, two classes.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{remove_isolated_nodes, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub num_graphs: usize,
    pub num_classes: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Width of the one-hot node-label features.
    pub feature_dim: usize,
    /// Expected number of neighbours inside a node's own block.
    pub degree_in: f64,
    /// Expected number of neighbours in other blocks.
    pub degree_out: f64,
    /// Probability that a node label is replaced by a random one.
    pub label_noise: f64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            num_graphs: 100,
            num_classes: 2,
            min_nodes: 10,
            max_nodes: 40,
            feature_dim: 3,
            degree_in: 3.0,
            degree_out: 0.7,
            label_noise: 0.1,
        }
    }
}

/// Graph `k` belongs to class `k % num_classes`; class `c` has `c + 2` blocks.
/// Isolated nodes are removed, so sizes can fall slightly below `min_nodes`.
pub fn sbm_corpus(spec: &SbmSpec, seed: u64) -> Result<Vec<Graph>> {
    if spec.num_classes == 0 || spec.min_nodes < 2 || spec.max_nodes < spec.min_nodes {
        return Err(Error::Config(format!("invalid SBM spec {spec:?}")));
    }
    if spec.feature_dim == 0 {
        return Err(Error::Config("feature_dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.num_graphs);
    for k in 0..spec.num_graphs {
        let class = k % spec.num_classes;
        loop {
            let g = sbm_graph(spec, class, &mut rng)?;
            if let Ok(g) = remove_isolated_nodes(&g) {
                out.push(g);
                break;
            }
        }
    }
    Ok(out)
}

fn sbm_graph(spec: &SbmSpec, class: usize, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
    let blocks = class + 2;
    let block: Vec<usize> = (0..n).map(|_| rng.random_range(0..blocks)).collect();
    let block_size = n as f64 / blocks as f64;
    let p_in = (spec.degree_in / (block_size - 1.0).max(1.0)).min(1.0);
    let p_out = (spec.degree_out / (n as f64 - block_size).max(1.0)).min(1.0);
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block[i] == block[j] { p_in } else { p_out };
            if rng.random_bool(p) {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    let mut x = Array2::zeros((n, spec.feature_dim));
    for (i, b) in block.iter().enumerate() {
        let tag = if rng.random_bool(spec.label_noise) {
            rng.random_range(0..spec.feature_dim)
        } else {
            b % spec.feature_dim
        };
        x[[i, tag]] = 1.0;
    }
    Graph::with_uniform_measure(x, a, Some(class))
}

/// Erdos-Renyi graph with uniform features in `[0, 1)^d`,
/// uniform measure, isolated nodes kept.
pub fn random_graph(n: usize, d: usize, p: f64, rng: &mut impl Rng) -> Result<Graph> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
    Graph::with_uniform_measure(x, a, None)
}
