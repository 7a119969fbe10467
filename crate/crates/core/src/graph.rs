//! Graphs, TUDataset ingestion, featurization and splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{Matrix, Segments, SparseMatrix};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("invalid split: {0}")]
    Split(String),
}

/// One undirected graph with dense node features and a class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    label: usize,
}

impl Graph {
    /// Builds a graph, normalizing edges to `(min, max)` pairs, dropping
    /// self-loops and collapsing repeated pairs.
    pub fn new(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        label: usize,
    ) -> Result<Self, GraphError> {
        if features.rows() != n_nodes {
            return Err(GraphError::Invalid(format!(
                "{} feature rows for {n_nodes} nodes",
                features.rows()
            )));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(GraphError::Invalid(format!(
                    "edge ({u}, {v}) outside {n_nodes} nodes"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Self {
            n_nodes,
            edges: set.into_iter().collect(),
            features,
            label,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Undirected edges with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    pub fn adjacency(&self) -> SparseMatrix {
        SparseMatrix::from_undirected_edges(self.n_nodes, &self.edges)
            .expect("edges validated at construction")
    }

    pub fn with_features(&self, features: Matrix) -> Result<Self, GraphError> {
        Self::new(self.n_nodes, self.edges.iter().copied(), features, self.label)
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub n_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Result<Self, GraphError> {
        let feature_dim = graphs.first().map_or(0, |g| g.features().cols());
        if let Some(g) = graphs.iter().find(|g| g.features().cols() != feature_dim) {
            return Err(GraphError::Invalid(format!(
                "feature dim {} differs from {feature_dim}",
                g.features().cols()
            )));
        }
        let n_classes = graphs.iter().map(|g| g.label() + 1).max().unwrap_or(0);
        Ok(Self {
            name: name.into(),
            graphs,
            n_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.graphs
            .iter()
            .flat_map(|g| g.degrees())
            .max()
            .unwrap_or(0)
    }

    pub fn subset(&self, idx: &[usize]) -> Vec<&Graph> {
        idx.iter().map(|&i| &self.graphs[i]).collect()
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, GraphError> {
    let text = fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            GraphError::MissingFile(path.to_path_buf())
        } else {
            GraphError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn parse_int(path: &Path, line: usize, s: &str) -> Result<i64, GraphError> {
    s.trim().parse::<i64>().map_err(|e| GraphError::Parse {
        file: path.to_path_buf(),
        line,
        msg: format!("cannot parse {s:?} as integer: {e}"),
    })
}

/// Loads `<dir>/<name>_*.txt` in TUDataset layout.
///
/// Node labels, when present, become one-hot features over the distinct
/// label values. Without them the dataset has `feature_dim == 0` and must be
/// featurized (see [`degree_onehot_features`]).
pub fn parse_tu_dataset(dir: &Path, name: &str) -> Result<Dataset, GraphError> {
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));
    let (a_path, ind_path, lab_path, node_path) = (
        file("A"),
        file("graph_indicator"),
        file("graph_labels"),
        file("node_labels"),
    );
    for p in [&a_path, &ind_path, &lab_path] {
        if !p.is_file() {
            return Err(GraphError::MissingFile(p.clone()));
        }
    }

    let raw_labels: Vec<i64> = read_lines(&lab_path)?
        .iter()
        .map(|(ln, s)| parse_int(&lab_path, *ln, s))
        .collect::<Result<_, _>>()?;
    let n_graphs = raw_labels.len();
    let label_map: BTreeMap<i64, usize> = raw_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();

    // Global node id -> (graph, local id).
    let mut node_graph = Vec::new();
    let mut sizes = vec![0usize; n_graphs];
    for (ln, s) in read_lines(&ind_path)? {
        let gid = parse_int(&ind_path, ln, &s)?;
        if gid < 1 || gid as usize > n_graphs {
            return Err(GraphError::Parse {
                file: ind_path.clone(),
                line: ln,
                msg: format!("graph id {gid} outside 1..={n_graphs}"),
            });
        }
        let g = gid as usize - 1;
        node_graph.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(GraphError::Parse {
            file: ind_path.clone(),
            line: node_graph.len(),
            msg: format!("graph {} has no nodes", g + 1),
        });
    }
    let n_nodes = node_graph.len();

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    for (ln, s) in read_lines(&a_path)? {
        let mut parts = s.split(',');
        let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(GraphError::Parse {
                file: a_path.clone(),
                line: ln,
                msg: format!("expected \"u, v\", got {s:?}"),
            });
        };
        let endpoint = |x: &str| -> Result<(usize, usize), GraphError> {
            let id = parse_int(&a_path, ln, x)?;
            if id < 1 || id as usize > n_nodes {
                return Err(GraphError::Parse {
                    file: a_path.clone(),
                    line: ln,
                    msg: format!("node id {id} outside 1..={n_nodes}"),
                });
            }
            Ok(node_graph[id as usize - 1])
        };
        let (gu, lu) = endpoint(u)?;
        let (gv, lv) = endpoint(v)?;
        if gu != gv {
            return Err(GraphError::Parse {
                file: a_path.clone(),
                line: ln,
                msg: format!("edge joins graphs {} and {}", gu + 1, gv + 1),
            });
        }
        edges[gu].push((lu, lv));
    }

    let node_labels = if node_path.is_file() {
        let values: Vec<i64> = read_lines(&node_path)?
            .iter()
            .map(|(ln, s)| {
                // Some datasets carry extra comma-separated columns; the
                // first one is the label.
                parse_int(&node_path, *ln, s.split(',').next().unwrap_or(""))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != n_nodes {
            return Err(GraphError::Parse {
                file: node_path.clone(),
                line: values.len(),
                msg: format!("{} node labels for {n_nodes} nodes", values.len()),
            });
        }
        Some(values)
    } else {
        None
    };
    let node_label_map: BTreeMap<i64, usize> = node_labels
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let feature_dim = node_label_map.len();

    let mut features: Vec<Matrix> = sizes
        .iter()
        .map(|&n| Matrix::zeros(n, feature_dim))
        .collect();
    if let Some(values) = &node_labels {
        for (node, &v) in values.iter().enumerate() {
            let (g, local) = node_graph[node];
            features[g].set(local, node_label_map[&v], 1.0);
        }
    }

    let graphs = edges
        .into_iter()
        .zip(features)
        .zip(sizes.iter().zip(&raw_labels))
        .map(|((e, f), (&n, l))| Graph::new(n, e, f, label_map[l]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ds = Dataset::new(name, graphs)?;
    ds.n_classes = label_map.len();
    ds.feature_dim = feature_dim;
    Ok(ds)
}

/// Replaces node features with a one-hot encoding of `min(degree, max_degree)`.
pub fn degree_onehot_features(dataset: &Dataset, max_degree: usize) -> Dataset {
    let max_degree = max_degree.max(1);
    let dim = max_degree + 1;
    let graphs = dataset
        .graphs
        .iter()
        .map(|g| {
            let mut f = Matrix::zeros(g.n_nodes(), dim);
            for (i, d) in g.degrees().into_iter().enumerate() {
                f.set(i, d.min(max_degree), 1.0);
            }
            g.with_features(f).expect("row count unchanged")
        })
        .collect();
    Dataset {
        name: dataset.name.clone(),
        graphs,
        n_classes: dataset.n_classes,
        feature_dim: dim,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|&f| !(f > 0.0)) {
            return Err(GraphError::Split(format!("fractions must be positive: {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GraphError::Split(format!("fractions must sum to 1: {fr:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded uniform shuffle cut into validation and test blocks of
/// `floor(frac·N)`; the remainder is the training split.
pub fn split_dataset(n_graphs: usize, spec: &SplitSpec) -> Result<Split, GraphError> {
    spec.validate()?;
    if n_graphs == 0 {
        return Err(GraphError::Split("dataset is empty".into()));
    }
    let mut order: Vec<usize> = (0..n_graphs).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let cut = |f: f64| (f * n_graphs as f64 + 1e-9).floor() as usize;
    let (n_val, n_test) = (cut(spec.val_frac), cut(spec.test_frac));
    if n_val == 0 || n_test == 0 || n_val + n_test >= n_graphs {
        return Err(GraphError::Split(format!(
            "{n_graphs} graphs leave an empty split (val {n_val}, test {n_test})"
        )));
    }
    let test = order.split_off(n_graphs - n_test);
    let val = order.split_off(n_graphs - n_test - n_val);
    Ok(Split {
        train: order,
        val,
        test,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphStats {
    pub n_graphs: usize,
    pub n_classes: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
}

pub fn graph_stats(dataset: &Dataset) -> GraphStats {
    let n = dataset.len().max(1) as f64;
    GraphStats {
        n_graphs: dataset.len(),
        n_classes: dataset.n_classes,
        avg_nodes: dataset.graphs.iter().map(|g| g.n_nodes() as f64).sum::<f64>() / n,
        avg_edges: dataset.graphs.iter().map(|g| g.edges().len() as f64).sum::<f64>() / n,
    }
}

/// Block-diagonal batch of graphs.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub adjacency: Rc<SparseMatrix>,
    pub features: Matrix,
    pub segments: Rc<Segments>,
    pub labels: Rc<Vec<usize>>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph]) -> Self {
        let sizes: Vec<usize> = graphs.iter().map(|g| g.n_nodes()).collect();
        let total: usize = sizes.iter().sum();
        let cols = graphs.first().map_or(0, |g| g.features().cols());
        let mut data = Vec::with_capacity(total * cols);
        let mut edges = Vec::new();
        let mut offset = 0;
        for g in graphs {
            data.extend_from_slice(g.features().data());
            edges.extend(g.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
            offset += g.n_nodes();
        }
        Self {
            adjacency: Rc::new(
                SparseMatrix::from_undirected_edges(total, &edges).expect("offsets in range"),
            ),
            features: Matrix::from_vec(total, cols, data).expect("features share width"),
            segments: Rc::new(Segments::from_sizes(&sizes)),
            labels: Rc::new(graphs.iter().map(|g| g.label()).collect()),
        }
    }

    pub fn n_graphs(&self) -> usize {
        self.segments.n_segments()
    }
}
