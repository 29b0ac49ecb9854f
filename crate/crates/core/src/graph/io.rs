//! CSV/JSON ingestion of snapshot sequences.
//!
//! A manifest looks like
//!
//! ```json
//! {"num_nodes": 6, "directed": false,
//!  "snapshots": [{"timestamp": 0.0, "edges": "edges.csv",
//!                 "node_features": "node_features.csv"}]}
//! ```
//!
//! `edges.csv` rows are `src,dst[,timestamp]`, `node_features.csv` rows are
//! `node_id,f1,...,fd` and the optional `edge_features` file has rows
//! `edge_index,f1,...,fd` indexing the edges file. A snapshot entry without
//! `timestamp` expands into one snapshot per distinct value of the edges
//! file's timestamp column. Undirected inputs are stored as two directed edges.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GraphSnapshot;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    /// JSON manifest referencing per-snapshot CSV files.
    Manifest,
    /// A single `src,dst[,timestamp]` file, undirected, without features.
    EdgeList,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_nodes: Option<usize>,
    #[serde(default)]
    directed: bool,
    snapshots: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamp: Option<f64>,
    edges: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_features: Option<String>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers. A first
/// line whose leading field is not numeric is treated as a header.
fn csv_rows(text: &str) -> Vec<(usize, Vec<&str>)> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && fields[0].parse::<f64>().is_err() {
            // header
            rows.push((0, Vec::new()));
            continue;
        }
        rows.push((i + 1, fields));
    }
    rows.retain(|(l, _)| *l > 0);
    rows
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::ParseError {
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

#[derive(Clone, Copy)]
struct EdgeRow {
    src: usize,
    dst: usize,
    time: Option<f64>,
}

fn read_edges(path: &Path) -> Result<Vec<EdgeRow>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_edges(&text, &path.display().to_string())
}

fn parse_edges(text: &str, source: &str) -> Result<Vec<EdgeRow>> {
    csv_rows(text)
        .into_iter()
        .map(|(line, f)| {
            if !(2..=3).contains(&f.len()) {
                return Err(Error::ParseError {
                    line,
                    message: format!("{source}: expected src,dst[,timestamp], got {} fields", f.len()),
                });
            }
            Ok(EdgeRow {
                src: parse_field(line, f[0], "source index")?,
                dst: parse_field(line, f[1], "target index")?,
                time: f.get(2).map(|t| parse_field(line, t, "timestamp")).transpose()?,
            })
        })
        .collect()
}

/// Rows `index,f1..fd`, returned as (index, features) with a common width.
/// Feature width and `(row index, values)` pairs.
type IndexedFeatures = (usize, Vec<(usize, Vec<f64>)>);

fn read_indexed_features(path: &Path) -> Result<IndexedFeatures> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut width = None;
    let mut out = Vec::new();
    for (line, f) in csv_rows(&text) {
        let d = f.len() - 1;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(Error::ParseError {
                    line,
                    message: format!("{}: expected {} features, got {d}", path.display(), w),
                })
            }
            _ => {}
        }
        let idx = parse_field(line, f[0], "index")?;
        let vals = f[1..]
            .iter()
            .map(|v| parse_field(line, v, "feature value"))
            .collect::<Result<Vec<f64>>>()?;
        out.push((idx, vals));
    }
    Ok((width.unwrap_or(0), out))
}

fn feature_matrix(rows: usize, width: usize, entries: Vec<(usize, Vec<f64>)>, what: &str) -> Result<Matrix> {
    let mut m = Matrix::zeros(rows, width);
    for (idx, vals) in entries {
        if idx >= rows {
            return Err(Error::ValidationError(format!("{what} index {idx} out of range (have {rows})")));
        }
        m.data[idx * width..(idx + 1) * width].copy_from_slice(&vals);
    }
    Ok(m)
}

/// Loads and validates a snapshot sequence, sorted by timestamp.
pub fn load_graph(path: &Path, format: GraphFormat) -> Result<Vec<GraphSnapshot>> {
    let mut snaps = match format {
        GraphFormat::EdgeList => load_edge_list(path)?,
        GraphFormat::Manifest => load_manifest(path)?,
    };
    snaps.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    for s in &snaps {
        s.validate()?;
    }
    if snaps.is_empty() {
        return Err(Error::ValidationError("no snapshots".into()));
    }
    Ok(snaps)
}

fn group_by_time(rows: Vec<EdgeRow>, default_time: Option<f64>) -> Result<BTreeMap<u64, (f64, Vec<usize>)>> {
    let mut groups: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        let t = default_time.or(r.time).unwrap_or(0.0);
        if !t.is_finite() {
            return Err(Error::ValidationError("non-finite timestamp".into()));
        }
        // total order on finite floats via their sortable bit pattern
        let key = sortable_bits(t);
        groups.entry(key).or_insert((t, Vec::new())).1.push(k);
    }
    Ok(groups)
}

fn sortable_bits(t: f64) -> u64 {
    let b = t.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn load_edge_list(path: &Path) -> Result<Vec<GraphSnapshot>> {
    edge_list_snapshots(read_edges(path)?)
}

/// Parses edge-list text as [`GraphFormat::EdgeList`] does a file.
pub fn parse_edge_list(text: &str) -> Result<Vec<GraphSnapshot>> {
    let mut snaps = edge_list_snapshots(parse_edges(text, "edge list")?)?;
    snaps.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    for s in &snaps {
        s.validate()?;
    }
    if snaps.is_empty() {
        return Err(Error::ValidationError("no snapshots".into()));
    }
    Ok(snaps)
}

fn edge_list_snapshots(rows: Vec<EdgeRow>) -> Result<Vec<GraphSnapshot>> {
    let n = rows.iter().map(|r| r.src.max(r.dst) + 1).max().unwrap_or(0);
    let groups = group_by_time(rows.clone(), None)?;
    Ok(groups
        .into_values()
        .map(|(t, idx)| {
            let edges = idx.iter().map(|&k| (rows[k].src, rows[k].dst)).collect();
            GraphSnapshot::from_edges(n, edges, t).symmetrized()
        })
        .collect())
}

fn load_manifest(path: &Path) -> Result<Vec<GraphSnapshot>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::ParseError {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));

    struct Raw {
        time: f64,
        edges: Vec<(usize, usize)>,
        edge_rows: Vec<usize>,
        edge_feats: Option<IndexedFeatures>,
        node_feats: Option<IndexedFeatures>,
    }

    let mut raws = Vec::new();
    for entry in &manifest.snapshots {
        let rows = read_edges(&base.join(&entry.edges))?;
        let node_feats = entry
            .node_features
            .as_ref()
            .map(|f| read_indexed_features(&base.join(f)))
            .transpose()?;
        let edge_feats = entry
            .edge_features
            .as_ref()
            .map(|f| read_indexed_features(&base.join(f)))
            .transpose()?;
        if entry.timestamp.is_none() && rows.iter().any(|r| r.time.is_none()) {
            return Err(Error::ValidationError(format!(
                "{}: snapshot entry has no timestamp and the edges file lacks a timestamp column",
                entry.edges
            )));
        }
        for (t, idx) in group_by_time(rows.clone(), entry.timestamp)?.into_values() {
            raws.push(Raw {
                time: t,
                edges: idx.iter().map(|&k| (rows[k].src, rows[k].dst)).collect(),
                edge_rows: idx,
                edge_feats: edge_feats.clone(),
                node_feats: node_feats.clone(),
            });
        }
    }

    let inferred = raws
        .iter()
        .flat_map(|r| {
            r.edges
                .iter()
                .map(|&(a, b)| a.max(b) + 1)
                .chain(r.node_feats.iter().flat_map(|(_, v)| v.iter().map(|(i, _)| i + 1)))
        })
        .max()
        .unwrap_or(0);
    let n = manifest.num_nodes.unwrap_or(inferred);

    raws.into_iter()
        .map(|r| {
            let (dv, nf) = r.node_feats.unwrap_or((0, Vec::new()));
            let node_features = feature_matrix(n, dv, nf, "node")?;
            let edge_features = match r.edge_feats {
                None => Matrix::zeros(r.edges.len(), 0),
                Some((de, ef)) => {
                    // edge feature indices refer to rows of the edges file
                    let pos: BTreeMap<usize, usize> =
                        r.edge_rows.iter().enumerate().map(|(j, &row)| (row, j)).collect();
                    let picked = ef
                        .into_iter()
                        .filter_map(|(row, v)| pos.get(&row).map(|&j| (j, v)))
                        .collect();
                    feature_matrix(r.edges.len(), de, picked, "edge")?
                }
            };
            let s = GraphSnapshot {
                num_nodes: n,
                edges: r.edges,
                node_features,
                edge_features,
                timestamp: r.time,
            };
            s.validate()?;
            Ok(if manifest.directed { s } else { s.symmetrized() })
        })
        .collect()
}

/// Writes snapshots as a directed manifest plus CSV files into `dir`;
/// returns the manifest path. Loading it back yields the same snapshots.
pub fn save_graph(dir: &Path, snapshots: &[GraphSnapshot]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let n = snapshots.first().map_or(0, |s| s.num_nodes);
    let mut entries = Vec::new();
    for (k, s) in snapshots.iter().enumerate() {
        s.validate()?;
        if s.num_nodes != n {
            return Err(Error::ValidationError("snapshots disagree on node count".into()));
        }
        let edges_name = format!("edges_{k}.csv");
        let mut text = String::from("src,dst\n");
        for (a, b) in &s.edges {
            let _ = writeln!(text, "{a},{b}");
        }
        write(&dir.join(&edges_name), &text)?;

        let node_name = (s.node_feature_dim() > 0).then(|| format!("node_features_{k}.csv"));
        if let Some(name) = &node_name {
            write(&dir.join(name), &indexed_rows(&s.node_features))?;
        }
        let edge_name = (s.edge_feature_dim() > 0).then(|| format!("edge_features_{k}.csv"));
        if let Some(name) = &edge_name {
            write(&dir.join(name), &indexed_rows(&s.edge_features))?;
        }
        entries.push(SnapshotEntry {
            timestamp: Some(s.timestamp),
            edges: edges_name,
            node_features: node_name,
            edge_features: edge_name,
        });
    }
    let manifest = Manifest {
        num_nodes: Some(n),
        directed: true,
        snapshots: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&path, &json)?;
    Ok(path)
}

fn indexed_rows(m: &Matrix) -> String {
    let mut text = String::new();
    for r in 0..m.rows {
        let _ = write!(text, "{r}");
        for c in 0..m.cols {
            let _ = write!(text, ",{}", m.get(r, c));
        }
        text.push('\n');
    }
    text
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}
