//! Shared fixtures for the criterion benchmarks in `benches/`.

use fgwmixup::synth::{sbm_corpus, SbmSpec};
use fgwmixup::Graph;

/// Two SBM graphs (one per class) with node counts in `min..=max`.
pub fn graph_pair(min_nodes: usize, max_nodes: usize, seed: u64) -> (Graph, Graph) {
    let spec = SbmSpec {
        num_graphs: 2,
        min_nodes,
        max_nodes,
        ..SbmSpec::default()
    };
    let mut graphs = sbm_corpus(&spec, seed).expect("valid spec");
    let second = graphs.pop().expect("two graphs");
    let first = graphs.pop().expect("two graphs");
    (first, second)
}
