//! Structural diagnostics of graph snapshots: Gromov delta, first Betti
//! number, global clustering, temporal closure and summary statistics.
//!
//! Every metric works on the simple undirected view of a snapshot: edge
//! directions are dropped, duplicates merged and self-loops removed.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSnapshot;

/// Largest component size accepted by [`DeltaMode::Exact`].
pub const EXACT_DELTA_CAP: usize = 300;

/// Above this size sampled delta runs a breadth-first search per quadruple
/// instead of tabulating all distances.
const DISTANCE_TABLE_CAP: usize = 4000;

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleGraph {
    adj: Vec<Vec<usize>>,
}

impl SimpleGraph {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::ValidationError(format!("edge ({a}, {b}) out of range for {num_nodes} nodes")));
            }
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Self { adj })
    }

    pub fn from_snapshot(g: &GraphSnapshot) -> Result<Self> {
        Self::new(g.num_nodes, &g.edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Connected components, each sorted, largest first (ties by smallest node).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &w in &self.adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        q.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        out
    }

    /// Hop distances from `s`; `u32::MAX` marks unreachable nodes.
    pub fn bfs(&self, s: usize) -> Vec<u32> {
        let mut d = vec![u32::MAX; self.num_nodes()];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &self.adj[v] {
                if d[w] == u32::MAX {
                    d[w] = d[v] + 1;
                    q.push_back(w);
                }
            }
        }
        d
    }

    /// Induced subgraph on `nodes`, relabelled to `0..nodes.len()`.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let mut index = vec![usize::MAX; self.num_nodes()];
        for (k, &v) in nodes.iter().enumerate() {
            index[v] = k;
        }
        let adj = nodes
            .iter()
            .map(|&v| self.adj[v].iter().filter_map(|&w| (index[w] != usize::MAX).then_some(index[w])).collect())
            .collect();
        Self { adj }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaMode {
    Exact,
    Sampled { count: usize, seed: u64 },
}

/// Twice the four-point defect: with the three pair sums sorted
/// `S1 >= S2 >= S3`, returns `S1 - S2`.
fn defect(dij: u32, dkl: u32, dik: u32, djl: u32, dil: u32, djk: u32) -> u32 {
    let mut s = [dij + dkl, dik + djl, dil + djk];
    s.sort_unstable();
    s[2] - s[1]
}

/// Gromov delta of the largest connected component under the four-point
/// condition, with unit edge lengths.
pub fn gromov_delta(g: &GraphSnapshot, mode: DeltaMode) -> Result<f64> {
    gromov_delta_simple(&SimpleGraph::from_snapshot(g)?, mode)
}

pub fn gromov_delta_simple(g: &SimpleGraph, mode: DeltaMode) -> Result<f64> {
    let comps = g.components();
    let Some(lcc) = comps.first() else {
        return Ok(0.0);
    };
    let h = g.induced(lcc);
    let n = h.num_nodes();
    if let DeltaMode::Exact = mode {
        if n > EXACT_DELTA_CAP {
            return Err(Error::SizeLimit(format!(
                "exact delta is limited to {EXACT_DELTA_CAP} nodes, largest component has {n}; use sampled mode"
            )));
        }
    }
    if n < 4 {
        return Ok(0.0);
    }
    let twice = match mode {
        DeltaMode::Exact => {
            let d: Vec<Vec<u32>> = (0..n).into_par_iter().map(|s| h.bfs(s)).collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut best = 0;
                    for j in i + 1..n {
                        for k in j + 1..n {
                            for l in k + 1..n {
                                best = best.max(defect(d[i][j], d[k][l], d[i][k], d[j][l], d[i][l], d[j][k]));
                            }
                        }
                    }
                    best
                })
                .max()
                .unwrap_or(0)
        }
        DeltaMode::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let quads: Vec<[usize; 4]> = (0..count)
                .map(|_| {
                    let mut q = [0; 4];
                    for k in 0..4 {
                        q[k] = loop {
                            let c = rng.random_range(0..n);
                            if !q[..k].contains(&c) {
                                break c;
                            }
                        };
                    }
                    q
                })
                .collect();
            let table: Option<Vec<Vec<u32>>> = (n <= DISTANCE_TABLE_CAP).then(|| (0..n).into_par_iter().map(|s| h.bfs(s)).collect());
            quads
                .par_iter()
                .map(|&[i, j, k, l]| match &table {
                    Some(d) => defect(d[i][j], d[k][l], d[i][k], d[j][l], d[i][l], d[j][k]),
                    None => {
                        let (di, dj, dk) = (h.bfs(i), h.bfs(j), h.bfs(k));
                        defect(di[j], dk[l], di[k], dj[l], di[l], dj[k])
                    }
                })
                .max()
                .unwrap_or(0)
        }
    };
    Ok(twice as f64 / 2.0)
}

/// `|E| - |V| + |C|` of the simple undirected view.
pub fn betti_one(g: &GraphSnapshot) -> Result<usize> {
    let s = SimpleGraph::from_snapshot(g)?;
    Ok(s.num_edges() + s.components().len() - s.num_nodes())
}

/// Number of triangles and of connected triples (paths of length two).
pub fn triangles_and_triples(g: &SimpleGraph) -> (u64, u64) {
    let mut tri = 0u64;
    let mut triples = 0u64;
    for v in 0..g.num_nodes() {
        let nb = g.neighbors(v);
        let k = nb.len() as u64;
        triples += k * k.saturating_sub(1) / 2;
        for (a, &u) in nb.iter().enumerate() {
            if u <= v {
                continue;
            }
            for &w in &nb[a + 1..] {
                if g.has_edge(u, w) {
                    tri += 1;
                }
            }
        }
    }
    (tri, triples)
}

/// `3 * triangles / connected triples`, 0 when there are no triples.
pub fn clustering_coefficient(g: &GraphSnapshot) -> Result<f64> {
    let (t, p) = triangles_and_triples(&SimpleGraph::from_snapshot(g)?);
    Ok(if p == 0 { 0.0 } else { 3.0 * t as f64 / p as f64 })
}

/// Counts of open wedges and of those closed later, see [`tcc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureCounts {
    pub wedges: u64,
    pub closed: u64,
}

impl ClosureCounts {
    pub fn fraction(&self) -> f64 {
        if self.wedges == 0 {
            0.0
        } else {
            self.closed as f64 / self.wedges as f64
        }
    }
}

/// Open wedges `u - v - w` of snapshot `t` (with `u - w` absent at `t`)
/// for every snapshot that has a successor, and how many of them gain the
/// edge `u - w` within snapshots `t+1 ..= t+delta_t`.
pub fn closure_counts(snapshots: &[GraphSnapshot], delta_t: usize) -> Result<ClosureCounts> {
    if snapshots.len() < 2 {
        return Err(Error::TooFewSnapshots {
            needed: 2,
            got: snapshots.len(),
        });
    }
    if delta_t == 0 {
        return Err(Error::InvalidConfig("delta_t must be at least 1".into()));
    }
    let graphs: Vec<SimpleGraph> = snapshots.iter().map(SimpleGraph::from_snapshot).collect::<Result<_>>()?;
    let n = graphs[0].num_nodes();
    if graphs.iter().any(|g| g.num_nodes() != n) {
        return Err(Error::ValidationError("snapshots disagree on node count".into()));
    }
    let counts: Vec<(u64, u64)> = (0..graphs.len() - 1)
        .into_par_iter()
        .map(|t| {
            let g = &graphs[t];
            let window = &graphs[t + 1..(t + 1 + delta_t).min(graphs.len())];
            let mut wedges = 0;
            let mut closed = 0;
            for v in 0..n {
                let nb = g.neighbors(v);
                for (a, &u) in nb.iter().enumerate() {
                    for &w in &nb[a + 1..] {
                        if g.has_edge(u, w) {
                            continue;
                        }
                        wedges += 1;
                        if window.iter().any(|h| h.has_edge(u, w)) {
                            closed += 1;
                        }
                    }
                }
            }
            (wedges, closed)
        })
        .collect();
    Ok(counts.iter().fold(ClosureCounts { wedges: 0, closed: 0 }, |acc, &(w, c)| ClosureCounts {
        wedges: acc.wedges + w,
        closed: acc.closed + c,
    }))
}

/// Temporal closure coefficient: the fraction of open wedges that close
/// within `delta_t` snapshots.
pub fn tcc(snapshots: &[GraphSnapshot], delta_t: usize) -> Result<f64> {
    Ok(closure_counts(snapshots, delta_t)?.fraction())
}

/// Summary of a per-snapshot series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalStats {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    /// `sqrt(variance) / mean`, 0 when the mean is not positive.
    pub cv: f64,
    /// Nearest-rank 90th percentile.
    pub p90: f64,
}

pub fn temporal_stats(values: &[f64]) -> Result<TemporalStats> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean > 0.0 { variance.sqrt() / mean } else { 0.0 };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.9 * n).ceil() as usize).clamp(1, sorted.len());
    Ok(TemporalStats {
        mean,
        variance,
        cv,
        p90: sorted[rank - 1],
    })
}

/// Raw metric values of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMetrics {
    pub timestamp: f64,
    pub delta: f64,
    pub betti1: usize,
    pub clustering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub delta: TemporalStats,
    pub betti1: TemporalStats,
    pub clustering: TemporalStats,
    /// `None` for a single snapshot.
    pub tcc: Option<f64>,
    pub per_snapshot: Vec<SnapshotMetrics>,
}

/// All metrics of a snapshot sequence with their temporal summaries.
pub fn metric_report(snapshots: &[GraphSnapshot], mode: DeltaMode, delta_t: usize) -> Result<MetricReport> {
    if snapshots.is_empty() {
        return Err(Error::EmptySeries);
    }
    if delta_t == 0 {
        return Err(Error::InvalidConfig("delta_t must be at least 1".into()));
    }
    let per_snapshot: Vec<SnapshotMetrics> = snapshots
        .iter()
        .map(|g| {
            Ok(SnapshotMetrics {
                timestamp: g.timestamp,
                delta: gromov_delta(g, mode)?,
                betti1: betti_one(g)?,
                clustering: clustering_coefficient(g)?,
            })
        })
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&SnapshotMetrics) -> f64| -> Vec<f64> { per_snapshot.iter().map(f).collect() };
    Ok(MetricReport {
        delta: temporal_stats(&col(&|s| s.delta))?,
        betti1: temporal_stats(&col(&|s| s.betti1 as f64))?,
        clustering: temporal_stats(&col(&|s| s.clustering))?,
        tcc: if snapshots.len() >= 2 { Some(tcc(snapshots, delta_t)?) } else { None },
        per_snapshot,
    })
}
