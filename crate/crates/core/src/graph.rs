//! Attributed graphs `(mu, X, A)`, node measures and feature-distance matrices.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deviation of `sum(mu)` from 1 accepted at construction; the measure is
/// renormalized when it falls inside this band.
pub const MEASURE_INGEST_TOL: f64 = 1e-9;

/// How a graph's node measure was built. Preprocessing that drops nodes
/// rebuilds the measure with the same policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurePolicy {
    Uniform,
    Degree,
    Custom,
}

/// An undirected attributed graph: node measure `mu` (length n), features
/// (n x d) and a symmetric structure matrix (n x n).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    mu: Array1<f64>,
    features: Array2<f64>,
    structure: Array2<f64>,
    label: Option<usize>,
    policy: MeasurePolicy,
}

impl Graph {
    /// Validating constructor with an explicit node measure.
    pub fn new(
        mu: Array1<f64>,
        features: Array2<f64>,
        structure: Array2<f64>,
        label: Option<usize>,
    ) -> Result<Self> {
        Self::with_policy(mu, features, structure, label, MeasurePolicy::Custom)
    }

    /// Graph with the uniform node measure `1/n`.
    pub fn with_uniform_measure(
        features: Array2<f64>,
        structure: Array2<f64>,
        label: Option<usize>,
    ) -> Result<Self> {
        let mu = uniform_measure(structure.nrows())?;
        Self::with_policy(mu, features, structure, label, MeasurePolicy::Uniform)
    }

    /// Graph with the degree node measure `deg(i) / sum(deg)`.
    pub fn with_degree_measure(
        features: Array2<f64>,
        structure: Array2<f64>,
        label: Option<usize>,
    ) -> Result<Self> {
        let mu = degree_measure(&structure)?;
        Self::with_policy(mu, features, structure, label, MeasurePolicy::Degree)
    }

    fn with_policy(
        mu: Array1<f64>,
        features: Array2<f64>,
        structure: Array2<f64>,
        label: Option<usize>,
        policy: MeasurePolicy,
    ) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::Dimension("graph must have at least one node".into()));
        }
        if structure.nrows() != n || structure.ncols() != n {
            return Err(Error::Dimension(format!(
                "structure is {}x{}, expected {n}x{n}",
                structure.nrows(),
                structure.ncols()
            )));
        }
        if features.nrows() != n {
            return Err(Error::Dimension(format!(
                "features have {} rows, expected {n}",
                features.nrows()
            )));
        }
        if structure.iter().chain(features.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("non-finite entry in features or structure".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if structure[[i, j]] != structure[[j, i]] {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
            }
        }
        let mu = normalize_measure(mu)?;
        Ok(Self {
            mu,
            features,
            structure,
            label,
            policy,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.mu.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn structure(&self) -> &Array2<f64> {
        &self.structure
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn measure_policy(&self) -> MeasurePolicy {
        self.policy
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Neighbour counts: nonzero off-diagonal entries per row.
    pub fn degrees(&self) -> Vec<usize> {
        degrees(&self.structure)
    }

    /// Fraction of off-diagonal entries that are nonzero.
    pub fn edge_density(&self) -> f64 {
        let n = self.num_nodes();
        if n < 2 {
            return 0.0;
        }
        let nnz: usize = self.degrees().iter().sum();
        nnz as f64 / (n * (n - 1)) as f64
    }

    /// Undirected edge list `(i, j)` with `i < j` over nonzero structure entries.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.structure[[i, j]] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn normalize_measure(mu: Array1<f64>) -> Result<Array1<f64>> {
    if let Some((i, v)) = mu.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Measure(format!("entry {i} is {v}, must be finite and >= 0")));
    }
    let total = mu.sum();
    if (total - 1.0).abs() > MEASURE_INGEST_TOL {
        return Err(Error::Measure(format!("measure sums to {total}, expected 1")));
    }
    Ok(mu / total)
}

/// Number of nonzero off-diagonal entries in each row.
pub fn degrees(structure: &Array2<f64>) -> Vec<usize> {
    structure
        .outer_iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, v)| j != i && *v != 0.0)
                .count()
        })
        .collect()
}

/// Uniform probability vector of length `n`.
pub fn uniform_measure(n: usize) -> Result<Array1<f64>> {
    if n == 0 {
        return Err(Error::Measure("uniform measure needs n >= 1".into()));
    }
    let mu = Array1::from_elem(n, 1.0 / n as f64);
    let total = mu.sum();
    Ok(mu / total)
}

/// Degree distribution `deg(i) / sum(deg)`.
pub fn degree_measure(structure: &Array2<f64>) -> Result<Array1<f64>> {
    let deg = degrees(structure);
    let total: usize = deg.iter().sum();
    if total == 0 {
        return Err(Error::Measure("degree measure of a graph without edges".into()));
    }
    Ok(deg.iter().map(|&d| d as f64 / total as f64).collect())
}

/// Pairwise feature costs `D[i, j] = ||x1_i - x2_j||^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistanceMatrix(Array2<f64>);

impl FeatureDistanceMatrix {
    /// Wraps a precomputed cost matrix; entries must be finite and nonnegative.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Dimension("feature costs must be finite and >= 0".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

fn pow_distance(a: ArrayView1<f64>, b: ArrayView1<f64>, q: f64) -> f64 {
    let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    if q == 2.0 {
        sq
    } else {
        sq.sqrt().powf(q)
    }
}

/// Feature-distance matrix between two graphs (Euclidean distance raised to `q`).
pub fn feature_distance_matrix(g1: &Graph, g2: &Graph, q: f64) -> Result<FeatureDistanceMatrix> {
    feature_costs(g1.features(), g2.features(), q)
}

/// Same as [`feature_distance_matrix`] on raw feature matrices.
pub fn feature_costs(x1: &Array2<f64>, x2: &Array2<f64>, q: f64) -> Result<FeatureDistanceMatrix> {
    if x1.ncols() != x2.ncols() {
        return Err(Error::Dimension(format!(
            "feature dimensions differ: {} vs {}",
            x1.ncols(),
            x2.ncols()
        )));
    }
    if !(q > 0.0) {
        return Err(Error::Config(format!("exponent q must be > 0, got {q}")));
    }
    let mut out = Array2::zeros((x1.nrows(), x2.nrows()));
    for (i, a) in x1.outer_iter().enumerate() {
        for (j, b) in x2.outer_iter().enumerate() {
            out[[i, j]] = pow_distance(a, b, q);
        }
    }
    Ok(FeatureDistanceMatrix(out))
}

fn select_square(m: &Array2<f64>, keep: &[usize]) -> Array2<f64> {
    m.select(Axis(0), keep).select(Axis(1), keep)
}

/// Drops degree-0 nodes, rebuilding the measure with the graph's policy.
pub fn remove_isolated_nodes(g: &Graph) -> Result<Graph> {
    let keep: Vec<usize> = g
        .degrees()
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::Dimension("every node is isolated".into()));
    }
    if keep.len() == g.num_nodes() {
        return Ok(g.clone());
    }
    let structure = select_square(g.structure(), &keep);
    let features = g.features().select(Axis(0), &keep);
    match g.policy {
        MeasurePolicy::Uniform => Graph::with_uniform_measure(features, structure, g.label),
        MeasurePolicy::Degree => Graph::with_degree_measure(features, structure, g.label),
        MeasurePolicy::Custom => {
            let mu = g.mu.select(Axis(0), &keep);
            let total = mu.sum();
            if !(total > 0.0) {
                return Err(Error::Measure("surviving nodes carry no mass".into()));
            }
            Graph::with_policy(mu / total, features, structure, g.label, MeasurePolicy::Custom)
        }
    }
}

/// One-hot degree encoding of width `max_degree + 1`; degrees above the cap
/// land in the last bucket. Replaces any existing features.
pub fn degree_feature_augmentation(g: &Graph, max_degree: usize) -> Graph {
    let deg = g.degrees();
    let mut features = Array2::zeros((g.num_nodes(), max_degree + 1));
    for (i, d) in deg.into_iter().enumerate() {
        features[[i, d.min(max_degree)]] = 1.0;
    }
    Graph {
        features,
        ..g.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> Array2<f64> {
        array![[0., 1., 0.], [1., 0., 1.], [0., 1., 0.]]
    }

    fn complete(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 1.0 })
    }

    #[test]
    fn build_minimal_graphs() {
        let g = Graph::new(array![1.0], array![[2.0]], array![[0.0]], None).unwrap();
        assert_eq!(g.num_nodes(), 1);
        let g = Graph::new(
            array![0.5, 0.5],
            array![[0.0], [1.0]],
            array![[0., 1.], [1., 0.]],
            Some(1),
        )
        .unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.label(), Some(1));
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let x = Array2::zeros((2, 1));
        let a = array![[0., 1.], [1., 0.]];
        assert!(matches!(
            Graph::new(array![0.6, 0.6], x.clone(), a.clone(), None),
            Err(Error::Measure(_))
        ));
        assert!(matches!(
            Graph::new(array![1.5, -0.5], x.clone(), a.clone(), None),
            Err(Error::Measure(_))
        ));
        assert!(matches!(
            Graph::new(array![0.5, 0.5], x.clone(), array![[0., 1.], [0.5, 0.]], None),
            Err(Error::Asymmetric { .. })
        ));
        assert!(matches!(
            Graph::new(array![0.5, 0.5], Array2::zeros((3, 1)), a, None),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn build_renormalizes_small_drift() {
        let g = Graph::new(
            array![0.5 + 4e-10, 0.5],
            Array2::zeros((2, 0)),
            array![[0., 1.], [1., 0.]],
            None,
        )
        .unwrap();
        assert!((g.mu().sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn uniform_measures() {
        assert_eq!(uniform_measure(4).unwrap().to_vec(), vec![0.25; 4]);
        assert_eq!(uniform_measure(1).unwrap().to_vec(), vec![1.0]);
        let m = uniform_measure(3).unwrap();
        assert!((m.sum() - 1.0).abs() <= 1e-15);
        assert!(m.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(uniform_measure(0).is_err());
    }

    #[test]
    fn degree_measures() {
        assert_eq!(degree_measure(&path3()).unwrap().to_vec(), vec![0.25, 0.5, 0.25]);
        let k3 = degree_measure(&complete(3)).unwrap();
        assert!(k3.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let mut star = Array2::zeros((4, 4));
        for leaf in 1..4 {
            star[[0, leaf]] = 1.0;
            star[[leaf, 0]] = 1.0;
        }
        let m = degree_measure(&star).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert!(m.iter().skip(1).all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
        assert!(degree_measure(&Array2::zeros((3, 3))).is_err());
    }

    #[test]
    fn feature_distances() {
        let g1 = Graph::new(array![1.0], array![[0.0]], array![[0.0]], None).unwrap();
        let g2 = Graph::new(array![1.0], array![[3.0]], array![[0.0]], None).unwrap();
        let d = feature_distance_matrix(&g1, &g2, 2.0).unwrap();
        assert_eq!(d.values(), &array![[9.0]]);
        let d1 = feature_distance_matrix(&g1, &g2, 1.0).unwrap();
        assert_eq!(d1.values(), &array![[3.0]]);
        let g3 = Graph::new(array![1.0], array![[3.0, 1.0]], array![[0.0]], None).unwrap();
        assert!(feature_distance_matrix(&g1, &g3, 2.0).is_err());
    }

    #[test]
    fn feature_distances_brute_force() {
        let x1 = array![[0.3, -1.2], [2.0, 0.5], [-0.7, 0.1]];
        let x2 = array![[1.0, 1.0], [0.0, -0.4], [0.25, 3.0], [-2.0, 0.0]];
        let d = feature_costs(&x1, &x2, 2.0).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += (x1[[i, k]] - x2[[j, k]]).powi(2);
                }
                assert!((d.values()[[i, j]] - s).abs() < 1e-14);
            }
        }
        let same = feature_costs(&x1, &x1, 2.0).unwrap();
        for i in 0..3 {
            assert_eq!(same.values()[[i, i]], 0.0);
            for j in 0..3 {
                assert_eq!(same.values()[[i, j]], same.values()[[j, i]]);
            }
        }
    }

    #[test]
    fn isolated_nodes_removed() {
        let mut a = Array2::zeros((4, 4));
        a.slice_mut(ndarray::s![0..3, 0..3]).assign(&complete(3));
        let x = Array2::from_shape_fn((4, 1), |(i, _)| i as f64);
        let g = Graph::with_uniform_measure(x, a, Some(0)).unwrap();
        let r = remove_isolated_nodes(&g).unwrap();
        assert_eq!(r.structure(), &complete(3));
        assert_eq!(r.features().column(0).to_vec(), vec![0.0, 1.0, 2.0]);
        assert_eq!(r.label(), Some(0));

        let k3 = Graph::with_uniform_measure(Array2::zeros((3, 0)), complete(3), None).unwrap();
        assert_eq!(remove_isolated_nodes(&k3).unwrap(), k3);
    }

    #[test]
    fn isolated_nodes_five_node_case() {
        // Nodes 1 and 3 are isolated.
        let mut a = Array2::zeros((5, 5));
        for (i, j) in [(0, 2), (2, 4)] {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        let g = Graph::with_uniform_measure(Array2::zeros((5, 2)), a.clone(), None).unwrap();
        let r = remove_isolated_nodes(&g).unwrap();
        let keep = [0usize, 2, 4];
        let expect = Array2::from_shape_fn((3, 3), |(i, j)| a[[keep[i], keep[j]]]);
        assert_eq!(r.structure(), &expect);
        assert!(r.mu().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(remove_isolated_nodes(&r).unwrap(), r);

        let empty = Graph::with_uniform_measure(Array2::zeros((2, 0)), Array2::zeros((2, 2)), None)
            .unwrap();
        assert!(remove_isolated_nodes(&empty).is_err());
    }

    #[test]
    fn degree_features() {
        let g = Graph::with_uniform_measure(Array2::zeros((3, 0)), path3(), None).unwrap();
        let f = degree_feature_augmentation(&g, 3);
        assert_eq!(
            f.features(),
            &array![[0., 1., 0., 0.], [0., 0., 1., 0.], [0., 1., 0., 0.]]
        );

        let mut star = Array2::zeros((8, 8));
        for leaf in 1..8 {
            star[[0, leaf]] = 1.0;
            star[[leaf, 0]] = 1.0;
        }
        let g = Graph::with_uniform_measure(Array2::zeros((8, 0)), star, None).unwrap();
        let f = degree_feature_augmentation(&g, 3);
        assert_eq!(f.features().row(0).to_vec(), vec![0., 0., 0., 1.]);

        let g = Graph::with_uniform_measure(Array2::zeros((4, 0)), complete(4), None).unwrap();
        let f = degree_feature_augmentation(&g, 5);
        for row in f.features().outer_iter() {
            assert_eq!(row.to_vec(), vec![0., 0., 0., 1., 0., 0.]);
        }
    }
}
