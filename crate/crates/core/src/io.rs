//! TUDataset text files in, TUDataset or JSONL files out.
//!
//! A TUDataset named `DS` lives in a directory holding `DS_A.txt`
//! (1-indexed global node ids, `a, b` per line), `DS_graph_indicator.txt`,
//! `DS_graph_labels.txt` and optionally `DS_node_labels.txt` /
//! `DS_node_attributes.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augment::SoftLabeledGraph;
use crate::error::{Error, Result};
use crate::graph::{degree_feature_augmentation, degrees, remove_isolated_nodes, Graph};

/// Cap on the width of degree one-hot features.
pub const DEFAULT_MAX_DEGREE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    NodeAttributes,
    NodeLabelsOnehot,
    DegreeOnehot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Tud,
    Jsonl,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tud" => Ok(Self::Tud),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// A labeled graph corpus. Every graph carries a label in `0..class_count`
/// and all graphs share one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub class_count: usize,
    pub feature_kind: FeatureKind,
}

impl Dataset {
    /// Builds a dataset from labeled graphs, checking the invariants.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, class_count: usize, feature_kind: FeatureKind) -> Result<Self> {
        let name = name.into();
        let dim = graphs.first().map(Graph::feature_dim);
        for (i, g) in graphs.iter().enumerate() {
            match g.label() {
                Some(y) if y < class_count => {}
                other => {
                    return Err(Error::Config(format!(
                        "graph {i} has label {other:?}, expected one in 0..{class_count}"
                    )))
                }
            }
            if Some(g.feature_dim()) != dim {
                return Err(Error::Dimension(format!(
                    "graph {i} has feature dimension {}, expected {}",
                    g.feature_dim(),
                    dim.unwrap_or_default()
                )));
            }
        }
        Ok(Self {
            name,
            graphs,
            class_count,
            feature_kind,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    /// The graphs with one-hot label distributions.
    pub fn to_soft_labeled(&self) -> Result<Vec<SoftLabeledGraph>> {
        self.graphs
            .iter()
            .map(|g| SoftLabeledGraph::from_hard(g.clone(), self.class_count))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub max_degree: usize,
    pub remove_isolated: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_degree: DEFAULT_MAX_DEGREE,
            remove_isolated: true,
        }
    }
}

fn ds_file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn parse_ints(path: &Path) -> Result<Vec<i64>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(k, l)| {
            l.parse::<i64>()
                .map_err(|e| Error::data(path, format!("line {}: `{l}`: {e}", k + 1)))
        })
        .collect()
}

fn parse_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let lines = read_lines(path)?;
    let mut rows = Vec::with_capacity(lines.len());
    for (k, l) in lines.iter().enumerate() {
        let row = l
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::data(path, format!("line {}: `{l}`: {e}", k + 1)))?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::data(
                    path,
                    format!("line {} has {} columns, expected {first}", k + 1, row.len()),
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Loads `dir/name_*.txt` with default options.
pub fn load_tudataset(dir: &Path, name: &str) -> Result<Dataset> {
    load_tudataset_with(dir, name, LoadOptions::default())
}

pub fn load_tudataset_with(dir: &Path, name: &str, opts: LoadOptions) -> Result<Dataset> {
    let a_path = ds_file(dir, name, "A");
    let ind_path = ds_file(dir, name, "graph_indicator");
    let lab_path = ds_file(dir, name, "graph_labels");
    for p in [&a_path, &ind_path, &lab_path] {
        if !p.is_file() {
            return Err(Error::data(p.as_path(), "required file is missing"));
        }
    }

    let indicator = parse_ints(&ind_path)?;
    let raw_labels = parse_ints(&lab_path)?;
    let num_nodes = indicator.len();
    let num_graphs = raw_labels.len();

    // Graph ids are 1-indexed and contiguous.
    let mut graph_of = Vec::with_capacity(num_nodes);
    for (k, g) in indicator.iter().enumerate() {
        if *g < 1 || *g as usize > num_graphs {
            return Err(Error::data(
                &ind_path,
                format!("line {}: graph id {g} outside 1..={num_graphs}", k + 1),
            ));
        }
        graph_of.push(*g as usize - 1);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    let mut local = vec![0usize; num_nodes];
    for (v, g) in graph_of.iter().enumerate() {
        local[v] = members[*g].len();
        members[*g].push(v);
    }

    let mut adj: Vec<Array2<f64>> = members.iter().map(|m| Array2::zeros((m.len(), m.len()))).collect();
    for (k, line) in read_lines(&a_path)?.iter().enumerate() {
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::data(&a_path, format!("line {}: expected `a, b`, got `{line}`", k + 1)));
        };
        let parse = |t: &str| -> Result<usize> {
            let id: i64 = t
                .parse()
                .map_err(|e| Error::data(&a_path, format!("line {}: `{t}`: {e}", k + 1)))?;
            if id < 1 || id as usize > num_nodes {
                return Err(Error::data(
                    &a_path,
                    format!("line {}: node id {id} outside 1..={num_nodes}", k + 1),
                ));
            }
            Ok(id as usize - 1)
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if graph_of[u] != graph_of[v] {
            return Err(Error::data(
                &a_path,
                format!("line {}: edge joins graphs {} and {}", k + 1, graph_of[u] + 1, graph_of[v] + 1),
            ));
        }
        if u != v {
            let m = &mut adj[graph_of[u]];
            m[[local[u], local[v]]] = 1.0;
            m[[local[v], local[u]]] = 1.0;
        }
    }

    // Node features: attributes, else one-hot node labels, else degrees.
    let attr_path = ds_file(dir, name, "node_attributes");
    let nl_path = ds_file(dir, name, "node_labels");
    let (node_features, feature_kind): (Option<Array2<f64>>, FeatureKind) = if attr_path.is_file() {
        let rows = parse_rows(&attr_path)?;
        if rows.len() != num_nodes {
            return Err(Error::data(
                &attr_path,
                format!("{} rows for {num_nodes} nodes", rows.len()),
            ));
        }
        let d = rows.first().map_or(0, Vec::len);
        let x = Array2::from_shape_fn((num_nodes, d), |(i, j)| rows[i][j]);
        (Some(x), FeatureKind::NodeAttributes)
    } else if nl_path.is_file() {
        let tags = parse_ints(&nl_path)?;
        if tags.len() != num_nodes {
            return Err(Error::data(
                &nl_path,
                format!("{} labels for {num_nodes} nodes", tags.len()),
            ));
        }
        let index: BTreeMap<i64, usize> = tags
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(k, t)| (t, k))
            .collect();
        let mut x = Array2::zeros((num_nodes, index.len()));
        for (v, t) in tags.iter().enumerate() {
            x[[v, index[t]]] = 1.0;
        }
        (Some(x), FeatureKind::NodeLabelsOnehot)
    } else {
        (None, FeatureKind::DegreeOnehot)
    };

    let label_index: BTreeMap<i64, usize> = raw_labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(k, t)| (t, k))
        .collect();
    let class_count = label_index.len();

    let mut graphs = Vec::with_capacity(num_graphs);
    for (gi, nodes) in members.iter().enumerate() {
        if nodes.is_empty() {
            log::warn!("{name}: graph {} has no nodes; dropped", gi + 1);
            continue;
        }
        let x = match &node_features {
            Some(all) => Array2::from_shape_fn((nodes.len(), all.ncols()), |(i, j)| all[[nodes[i], j]]),
            None => Array2::zeros((nodes.len(), 0)),
        };
        let a = std::mem::replace(&mut adj[gi], Array2::zeros((0, 0)));
        let g = Graph::with_uniform_measure(x, a, Some(label_index[&raw_labels[gi]]))?;
        let g = if opts.remove_isolated {
            match remove_isolated_nodes(&g) {
                Ok(g) => g,
                Err(_) => {
                    log::warn!("{name}: graph {} has only isolated nodes; dropped", gi + 1);
                    continue;
                }
            }
        } else {
            g
        };
        graphs.push(g);
    }

    if feature_kind == FeatureKind::DegreeOnehot {
        let observed = graphs
            .iter()
            .flat_map(|g| degrees(g.structure()))
            .max()
            .unwrap_or(0);
        let width = observed.min(opts.max_degree);
        graphs = graphs.iter().map(|g| degree_feature_augmentation(g, width)).collect();
    }
    log::info!(
        "loaded {name}: {} graphs, {class_count} classes, {:?} features",
        graphs.len(),
        feature_kind
    );
    Dataset::new(name, graphs, class_count, feature_kind)
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    mu: Vec<f64>,
    edges: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    label_distribution: &'a [f64],
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn join_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Writes `graphs` into `dir` as `name_*.txt` files (`tud`) or `name.jsonl`.
/// Returns the paths written.
pub fn save_dataset(graphs: &[SoftLabeledGraph], dir: &Path, name: &str, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        OutputFormat::Tud => save_tud(graphs, dir, name),
        OutputFormat::Jsonl => save_jsonl(graphs, dir, name),
    }
}

fn save_jsonl(graphs: &[SoftLabeledGraph], dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let path = dir.join(format!("{name}.jsonl"));
    let mut w = create(&path)?;
    for sg in graphs {
        let g = &sg.graph;
        let record = JsonGraph {
            mu: g.mu().to_vec(),
            edges: g.edges(),
            features: g.features().outer_iter().map(|r| r.to_vec()).collect(),
            label_distribution: &sg.label_distribution,
        };
        serde_json::to_writer(&mut w, &record)?;
        writeln!(w).map_err(|e| Error::io(&path, e))?;
    }
    finish(w, &path)?;
    Ok(vec![path])
}

fn save_tud(graphs: &[SoftLabeledGraph], dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let paths = [
        ds_file(dir, name, "A"),
        ds_file(dir, name, "graph_indicator"),
        ds_file(dir, name, "graph_labels"),
        ds_file(dir, name, "node_attributes"),
        ds_file(dir, name, "soft_labels"),
    ];
    let mut a = create(&paths[0])?;
    let mut ind = create(&paths[1])?;
    let mut lab = create(&paths[2])?;
    let mut attr = create(&paths[3])?;
    let mut soft = create(&paths[4])?;

    let mut offset = 0usize;
    for (gi, sg) in graphs.iter().enumerate() {
        let g = &sg.graph;
        let n = g.num_nodes();
        let io_err = |p: &Path| {
            let p = p.to_path_buf();
            move |e| Error::io(p, e)
        };
        for (i, row) in g.structure().outer_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j && *v != 0.0 {
                    writeln!(a, "{}, {}", offset + i + 1, offset + j + 1).map_err(io_err(&paths[0]))?;
                }
            }
        }
        for row in g.features().outer_iter() {
            writeln!(ind, "{}", gi + 1).map_err(io_err(&paths[1]))?;
            writeln!(attr, "{}", join_floats(row.iter().copied())).map_err(io_err(&paths[3]))?;
        }
        writeln!(lab, "{}", sg.argmax_label()).map_err(io_err(&paths[2]))?;
        writeln!(soft, "{}", join_floats(sg.label_distribution.iter().copied())).map_err(io_err(&paths[4]))?;
        offset += n;
    }
    for (w, p) in [a, ind, lab, attr, soft].into_iter().zip(&paths) {
        finish(w, p)?;
    }
    Ok(paths.to_vec())
}

/// Reads the `name_soft_labels.txt` sidecar written by [`save_dataset`].
pub fn load_soft_labels(dir: &Path, name: &str) -> Result<Vec<Vec<f64>>> {
    parse_rows(&ds_file(dir, name, "soft_labels"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(ds_file(dir, name, suffix), body).unwrap();
    }

    fn fixture(dir: &Path) {
        // Triangle (label 1) and a single edge (label 2), edges listed once.
        write(dir, "T", "A", "1, 2\n2, 3\n3, 1\n4, 5\n");
        write(dir, "T", "graph_indicator", "1\n1\n1\n2\n2\n");
        write(dir, "T", "graph_labels", "1\n2\n");
    }

    #[test]
    fn loads_minimal_fixture() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_tudataset(dir.path(), "T").unwrap();
        assert_eq!(ds.class_count, 2);
        assert_eq!(ds.graphs.iter().map(Graph::num_nodes).collect::<Vec<_>>(), vec![3, 2]);
        assert_eq!(ds.graphs.iter().map(|g| g.label().unwrap()).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(ds.feature_kind, FeatureKind::DegreeOnehot);
        // Max degree 2 gives width 3.
        assert_eq!(ds.feature_dim(), 3);
        for g in &ds.graphs {
            assert_eq!(g.structure(), &g.structure().t().to_owned());
        }
    }

    #[test]
    fn isolated_node_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "I", "A", "1, 2\n2, 1\n2, 3\n3, 2\n");
        write(dir.path(), "I", "graph_indicator", "1\n1\n1\n1\n");
        write(dir.path(), "I", "graph_labels", "0\n");
        let ds = load_tudataset(dir.path(), "I").unwrap();
        assert_eq!(ds.graphs[0].num_nodes(), 3);
    }

    #[test]
    fn node_labels_become_onehot() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        write(dir.path(), "T", "node_labels", "1\n2\n3\n1\n2\n");
        let ds = load_tudataset(dir.path(), "T").unwrap();
        assert_eq!(ds.feature_kind, FeatureKind::NodeLabelsOnehot);
        assert_eq!(ds.feature_dim(), 3);
        assert_eq!(ds.graphs[0].features()[[2, 2]], 1.0);
        assert_eq!(ds.graphs[1].features().row(1).to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_tudataset(dir.path(), "T"), Err(Error::Data { .. })));

        fixture(dir.path());
        write(dir.path(), "T", "A", "1, 2\n2, 9\n");
        assert!(matches!(load_tudataset(dir.path(), "T"), Err(Error::Data { .. })));

        fixture(dir.path());
        write(dir.path(), "T", "node_attributes", "1.0, 2.0\n1.0\n0, 0\n0, 0\n0, 0\n");
        assert!(matches!(load_tudataset(dir.path(), "T"), Err(Error::Data { .. })));
    }

    #[test]
    fn tud_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        write(dir.path(), "T", "node_attributes", "0.1, -2\n3.25, 1e-7\n0, 0\n1, 1\n0.3333333333333333, 2\n");
        let ds = load_tudataset(dir.path(), "T").unwrap();
        let out = tempfile::tempdir().unwrap();
        save_dataset(&ds.to_soft_labeled().unwrap(), out.path(), "T", OutputFormat::Tud).unwrap();
        let back = load_tudataset(out.path(), "T").unwrap();
        assert_eq!(back, ds);
        assert_eq!(load_soft_labels(out.path(), "T").unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn jsonl_carries_soft_labels() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_tudataset(dir.path(), "T").unwrap();
        let mixed = SoftLabeledGraph {
            graph: ds.graphs[0].clone(),
            label_distribution: crate::augment::mix_labels(0, 1, 0.7, 2).unwrap(),
            origin: None,
        };
        let out = tempfile::tempdir().unwrap();
        let paths = save_dataset(&[mixed], out.path(), "M", OutputFormat::Jsonl).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let dist: Vec<f64> = serde_json::from_value(v["label_distribution"].clone()).unwrap();
        assert!((dist[0] - 0.7).abs() < 1e-12 && (dist[1] - 0.3).abs() < 1e-12);
        assert_eq!(v["edges"].as_array().unwrap().len(), 3);
        assert_eq!(v["mu"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn argmax_ties_go_low() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_tudataset(dir.path(), "T").unwrap();
        let tie = SoftLabeledGraph {
            graph: ds.graphs[1].clone(),
            label_distribution: vec![0.5, 0.5],
            origin: None,
        };
        let out = tempfile::tempdir().unwrap();
        save_dataset(&[tie], out.path(), "X", OutputFormat::Tud).unwrap();
        assert_eq!(fs::read_to_string(ds_file(out.path(), "X", "graph_labels")).unwrap(), "0\n");
    }
}
