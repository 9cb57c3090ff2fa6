//! TU benchmark format (`DS_A.txt`, `DS_graph_indicator.txt`, ...).
//!
//! Node ids in `DS_A.txt` are 1-indexed over the whole dataset and
//! `DS_graph_indicator.txt` assigns each node (by line) to a 1-indexed
//! graph. Labels of any integer values are remapped to `0..C` in ascending
//! order. Node features come from `DS_node_attributes.txt` when it has
//! content, else from one-hot `DS_node_labels.txt`, else a constant 1.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Dataset, Edge, Graph, GraphError};
use crate::autodiff::Matrix;

#[derive(Debug, Error)]
pub enum TuError {
    #[error("missing required file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("no `*_A.txt` file found in {}", .0.display())]
    NoDataset(PathBuf),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {message}")]
    Content { file: String, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Raw contents of one TU dataset's files.
#[derive(Clone, Debug, Default)]
pub struct TuSources {
    pub name: String,
    pub adjacency: String,
    pub graph_indicator: String,
    pub graph_labels: String,
    pub node_attributes: Option<String>,
    pub node_labels: Option<String>,
}

impl TuSources {
    fn file(&self, suffix: &str) -> String {
        format!("{}_{}.txt", self.name, suffix)
    }
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_int(file: &str, line: usize, field: &str) -> Result<i64, TuError> {
    field.trim().parse::<i64>().map_err(|_| TuError::Parse {
        file: file.to_string(),
        line,
        message: format!("expected an integer, found {:?}", field.trim()),
    })
}

fn parse_real(file: &str, line: usize, field: &str) -> Result<f64, TuError> {
    let value = field.trim().parse::<f64>().map_err(|_| TuError::Parse {
        file: file.to_string(),
        line,
        message: format!("expected a real number, found {:?}", field.trim()),
    })?;
    if !value.is_finite() {
        return Err(TuError::Parse {
            file: file.to_string(),
            line,
            message: format!("non-finite value {value}"),
        });
    }
    Ok(value)
}

fn remap(values: &[i64]) -> (Vec<usize>, usize) {
    let distinct: BTreeMap<i64, usize> = values
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    (values.iter().map(|v| distinct[v]).collect(), distinct.len())
}

/// Parses a dataset from in-memory file contents.
pub fn parse_tu(src: &TuSources) -> Result<Dataset, TuError> {
    let labels_file = src.file("graph_labels");
    let mut raw_labels = Vec::new();
    for (line, text) in lines(&src.graph_labels) {
        raw_labels.push(parse_int(&labels_file, line, text)?);
    }
    let num_graphs = raw_labels.len();
    if num_graphs == 0 {
        return Err(TuError::Content {
            file: labels_file,
            message: "no graphs".into(),
        });
    }

    // node -> (graph, local index)
    let indicator_file = src.file("graph_indicator");
    let mut node_graph = Vec::new();
    let mut graph_sizes = vec![0usize; num_graphs];
    for (line, text) in lines(&src.graph_indicator) {
        let id = parse_int(&indicator_file, line, text)?;
        if id < 1 || id as u64 > num_graphs as u64 {
            return Err(TuError::Parse {
                file: indicator_file,
                line,
                message: format!("graph id {id} outside 1..={num_graphs}"),
            });
        }
        let g = (id - 1) as usize;
        node_graph.push((g, graph_sizes[g]));
        graph_sizes[g] += 1;
    }
    let num_nodes = node_graph.len();
    if let Some(empty) = graph_sizes.iter().position(|&s| s == 0) {
        return Err(TuError::Content {
            file: indicator_file,
            message: format!("graph {} has no nodes", empty + 1),
        });
    }

    let a_file = src.file("A");
    let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); num_graphs];
    for (line, text) in lines(&src.adjacency) {
        let mut fields = text.split(',');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(TuError::Parse {
                file: a_file,
                line,
                message: format!("expected \"u, v\", found {text:?}"),
            });
        };
        let endpoint = |field: &str| -> Result<usize, TuError> {
            let id = parse_int(&a_file, line, field)?;
            if id < 1 || id as u64 > num_nodes as u64 {
                return Err(TuError::Parse {
                    file: a_file.clone(),
                    line,
                    message: format!("node {id} outside the {num_nodes} nodes declared in the graph indicator"),
                });
            }
            Ok((id - 1) as usize)
        };
        let (u, v) = (endpoint(a)?, endpoint(b)?);
        let ((gu, lu), (gv, lv)) = (node_graph[u], node_graph[v]);
        if gu != gv {
            return Err(TuError::Parse {
                file: a_file,
                line,
                message: format!("edge joins graph {} and graph {}", gu + 1, gv + 1),
            });
        }
        edges[gu].push(Edge::new(lu, lv));
    }

    let features = node_features(src, num_nodes)?;
    let dim = features.first().map_or(1, Vec::len);

    let mut per_graph: Vec<Vec<f64>> = graph_sizes
        .iter()
        .map(|&s| Vec::with_capacity(s * dim))
        .collect();
    for (node, &(g, _)) in node_graph.iter().enumerate() {
        match features.get(node) {
            Some(row) => per_graph[g].extend_from_slice(row),
            None => per_graph[g].push(1.0),
        }
    }

    let (labels, num_classes) = remap(&raw_labels);
    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, (data, edge_list)) in per_graph.into_iter().zip(edges).enumerate() {
        let x = Matrix::new(graph_sizes[g], dim, data).map_err(|e| TuError::Content {
            file: src.file("node_attributes"),
            message: e.to_string(),
        })?;
        graphs.push(Graph::new(graph_sizes[g], edge_list, false, x, labels[g])?);
    }
    Ok(Dataset::new(src.name.clone(), graphs, num_classes.max(2))?)
}

/// Per-node feature rows, or an empty vector for constant features.
fn node_features(src: &TuSources, num_nodes: usize) -> Result<Vec<Vec<f64>>, TuError> {
    let attrs = src
        .node_attributes
        .as_deref()
        .filter(|t| lines(t).next().is_some());
    if let Some(text) = attrs {
        let file = src.file("node_attributes");
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(num_nodes);
        for (line, l) in lines(text) {
            let row = l
                .split(',')
                .map(|f| parse_real(&file, line, f))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(TuError::Parse {
                        file,
                        line,
                        message: format!("{} attributes, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.len() != num_nodes {
            return Err(TuError::Content {
                file,
                message: format!("{} attribute rows for {num_nodes} nodes", rows.len()),
            });
        }
        return Ok(rows);
    }
    let labels = src
        .node_labels
        .as_deref()
        .filter(|t| lines(t).next().is_some());
    if let Some(text) = labels {
        let file = src.file("node_labels");
        let mut raw = Vec::with_capacity(num_nodes);
        for (line, l) in lines(text) {
            raw.push(parse_int(&file, line, l)?);
        }
        if raw.len() != num_nodes {
            return Err(TuError::Content {
                file,
                message: format!("{} node labels for {num_nodes} nodes", raw.len()),
            });
        }
        let (ids, width) = remap(&raw);
        return Ok(ids
            .into_iter()
            .map(|i| {
                let mut row = vec![0.0; width];
                row[i] = 1.0;
                row
            })
            .collect());
    }
    Ok(Vec::new())
}

fn read_required(dir: &Path, name: &str, suffix: &str) -> Result<String, TuError> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    if !path.is_file() {
        return Err(TuError::MissingFile(path));
    }
    fs::read_to_string(&path).map_err(|source| TuError::Io { path, source })
}

fn read_optional(dir: &Path, name: &str, suffix: &str) -> Result<Option<String>, TuError> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    if !path.is_file() {
        return Ok(None);
    }
    fs::read_to_string(&path)
        .map(Some)
        .map_err(|source| TuError::Io { path, source })
}

/// Finds the dataset prefix: the directory name if `<dir>/<dir>_A.txt`
/// exists, otherwise the single `*_A.txt` file in the directory.
fn dataset_prefix(dir: &Path) -> Result<String, TuError> {
    if let Some(base) = dir.file_name().and_then(|s| s.to_str()) {
        if dir.join(format!("{base}_A.txt")).is_file() {
            return Ok(base.to_string());
        }
    }
    let entries = fs::read_dir(dir).map_err(|source| TuError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut found: Vec<String> = entries
        .filter_map(Result::ok)
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|f| f.strip_suffix("_A.txt").map(str::to_string))
        .collect();
    found.sort();
    found
        .into_iter()
        .next()
        .ok_or_else(|| TuError::NoDataset(dir.to_path_buf()))
}

pub fn load_tu_dataset(dir: impl AsRef<Path>) -> Result<Dataset, TuError> {
    let dir = dir.as_ref();
    let name = dataset_prefix(dir)?;
    let src = TuSources {
        adjacency: read_required(dir, &name, "A")?,
        graph_indicator: read_required(dir, &name, "graph_indicator")?,
        graph_labels: read_required(dir, &name, "graph_labels")?,
        node_attributes: read_optional(dir, &name, "node_attributes")?,
        node_labels: read_optional(dir, &name, "node_labels")?,
        name,
    };
    parse_tu(&src)
}

/// Renders a dataset as TU file contents. Undirected edges are written in
/// both directions; features always go to `node_attributes`.
pub fn render_tu(dataset: &Dataset) -> TuSources {
    use std::fmt::Write;
    let mut src = TuSources {
        name: dataset.name().to_string(),
        node_attributes: Some(String::new()),
        ..TuSources::default()
    };
    let attrs = src.node_attributes.as_mut().expect("set above");
    let mut offset = 0usize;
    for (gi, g) in dataset.graphs().iter().enumerate() {
        let _ = writeln!(src.graph_labels, "{}", g.label());
        for node in 0..g.num_nodes() {
            let _ = writeln!(src.graph_indicator, "{}", gi + 1);
            let row: Vec<String> = g.features().row(node).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(attrs, "{}", row.join(", "));
        }
        for e in g.edges() {
            let _ = writeln!(src.adjacency, "{}, {}", offset + e.u + 1, offset + e.v + 1);
            if !g.is_directed() {
                let _ = writeln!(src.adjacency, "{}, {}", offset + e.v + 1, offset + e.u + 1);
            }
        }
        offset += g.num_nodes();
    }
    src
}

/// Writes `<dir>/<name>_*.txt`.
pub fn write_tu_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), TuError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| TuError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let src = render_tu(dataset);
    let files = [
        ("A", &src.adjacency),
        ("graph_indicator", &src.graph_indicator),
        ("graph_labels", &src.graph_labels),
        ("node_attributes", src.node_attributes.as_ref().expect("rendered")),
    ];
    for (suffix, body) in files {
        let path = dir.join(src.file(suffix));
        fs::write(&path, body).map_err(|source| TuError::Io { path, source })?;
    }
    Ok(())
}
