//! Spatio-temporal graph snapshots, manifold encoders and message passing.
//!
//! Messages are formed in the tangent space at the origin: source, target
//! and edge points are pulled back with `Log_o`, concatenated and fed to an
//! MLP whose output passes through `tanh`. A node aggregates the messages of
//! its in-neighbours by compensated summation and maps the sum back with
//! `Exp_o`.

mod io;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{load_graph, parse_edge_list, save_graph, GraphFormat};

use crate::error::{Error, Result};
use crate::geometry::{Point, ProductManifold};
use crate::nn::{sigmoid, Activation, Matrix, Mlp};

/// One time slice of a spatio-temporal graph. Edges are directed `(src, dst)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub node_features: Matrix,
    pub edge_features: Matrix,
    pub timestamp: f64,
}

impl GraphSnapshot {
    /// Snapshot without features.
    pub fn from_edges(num_nodes: usize, edges: Vec<(usize, usize)>, timestamp: f64) -> Self {
        let ne = edges.len();
        Self {
            num_nodes,
            edges,
            node_features: Matrix::zeros(num_nodes, 0),
            edge_features: Matrix::zeros(ne, 0),
            timestamp,
        }
    }

    /// Adds the reverse of every edge (features copied).
    pub fn symmetrized(mut self) -> Self {
        let ne = self.edges.len();
        let de = self.edge_features.cols;
        let mut feats = self.edge_features.data.clone();
        for k in 0..ne {
            let (a, b) = self.edges[k];
            self.edges.push((b, a));
            feats.extend_from_slice(&self.edge_features.data[k * de..(k + 1) * de]);
        }
        self.edge_features = Matrix {
            rows: 2 * ne,
            cols: de,
            data: feats,
        };
        self
    }

    pub fn node_feature_dim(&self) -> usize {
        self.node_features.cols
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_features.cols
    }

    pub fn node_feature(&self, i: usize) -> &[f64] {
        let d = self.node_features.cols;
        &self.node_features.data[i * d..(i + 1) * d]
    }

    pub fn edge_feature(&self, k: usize) -> &[f64] {
        let d = self.edge_features.cols;
        &self.edge_features.data[k * d..(k + 1) * d]
    }

    pub fn validate(&self) -> Result<()> {
        self.node_features.check()?;
        self.edge_features.check()?;
        if let Some(&(a, b)) = self
            .edges
            .iter()
            .find(|(a, b)| *a >= self.num_nodes || *b >= self.num_nodes)
        {
            return Err(Error::ValidationError(format!(
                "edge ({a}, {b}) out of range for {} nodes",
                self.num_nodes
            )));
        }
        if self.node_features.rows != self.num_nodes {
            return Err(Error::ValidationError(format!(
                "node feature matrix has {} rows, graph has {} nodes",
                self.node_features.rows, self.num_nodes
            )));
        }
        if self.edge_features.rows != self.edges.len() {
            return Err(Error::ValidationError(format!(
                "edge feature matrix has {} rows, graph has {} edges",
                self.edge_features.rows,
                self.edges.len()
            )));
        }
        if !self.timestamp.is_finite() {
            return Err(Error::ValidationError("timestamp must be finite".into()));
        }
        Ok(())
    }

    /// Incoming edge indices per node, in edge order.
    pub fn in_edges(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.num_nodes];
        for (k, &(_, dst)) in self.edges.iter().enumerate() {
            inc[dst].push(k);
        }
        inc
    }
}

/// Encoder and message weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub w_v: Matrix,
    pub b_v: Vec<f64>,
    pub w_e: Matrix,
    pub b_e: Vec<f64>,
    pub msg_mlp: Mlp,
}

impl EncoderParams {
    /// Fan-in uniform initialisation. With `edge_dim == 0` the edge encoder
    /// maps everything to the origin.
    pub fn random<R: Rng + ?Sized>(
        m: &ProductManifold,
        node_dim: usize,
        edge_dim: usize,
        msg_hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let t = m.tangent_dim();
        let w_v = Matrix::uniform_fan_in(t, node_dim, rng);
        let bv = 1.0 / (node_dim.max(1) as f64).sqrt();
        let b_v = (0..t).map(|_| rng.random_range(-bv..=bv)).collect();
        let w_e = Matrix::uniform_fan_in(t, edge_dim, rng);
        let b_e = if edge_dim == 0 {
            vec![0.0; t]
        } else {
            let be = 1.0 / (edge_dim as f64).sqrt();
            (0..t).map(|_| rng.random_range(-be..=be)).collect()
        };
        let mut widths = vec![3 * t];
        widths.extend_from_slice(msg_hidden);
        widths.push(t);
        let msg_mlp = Mlp::random(&widths, Activation::Tanh, rng);
        Self {
            w_v,
            b_v,
            w_e,
            b_e,
            msg_mlp,
        }
    }

    /// All weights zero: every encoder output is the origin and every message is zero.
    pub fn zeros(m: &ProductManifold, node_dim: usize, edge_dim: usize) -> Self {
        let t = m.tangent_dim();
        Self {
            w_v: Matrix::zeros(t, node_dim),
            b_v: vec![0.0; t],
            w_e: Matrix::zeros(t, edge_dim),
            b_e: vec![0.0; t],
            msg_mlp: Mlp::linear(Matrix::zeros(t, 3 * t), vec![0.0; t]).expect("shapes agree"),
        }
    }

    pub fn validate(&self, m: &ProductManifold) -> Result<()> {
        let t = m.tangent_dim();
        let dims = [
            ("node encoder rows", self.w_v.rows),
            ("node encoder bias", self.b_v.len()),
            ("edge encoder rows", self.w_e.rows),
            ("edge encoder bias", self.b_e.len()),
        ];
        for (context, got) in dims {
            if got != t {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: t,
                    got,
                });
            }
        }
        self.w_v.check()?;
        self.w_e.check()?;
        self.msg_mlp.check()?;
        if self.msg_mlp.input_dim() != Some(3 * t) {
            return Err(Error::DimensionMismatch {
                context: "message mlp input",
                expected: 3 * t,
                got: self.msg_mlp.input_dim().unwrap_or(0),
            });
        }
        if self.msg_mlp.output_dim() != Some(t) {
            return Err(Error::DimensionMismatch {
                context: "message mlp output",
                expected: t,
                got: self.msg_mlp.output_dim().unwrap_or(0),
            });
        }
        Ok(())
    }

    /// `W_v n + b_v`, the node encoding in origin tangent coordinates.
    pub fn node_tangent(&self, n: &[f64]) -> Result<Vec<f64>> {
        affine(&self.w_v, &self.b_v, n)
    }

    pub fn edge_tangent(&self, e: &[f64]) -> Result<Vec<f64>> {
        affine(&self.w_e, &self.b_e, e)
    }
}

fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.cols {
        return Err(Error::DimensionMismatch {
            context: "feature vector",
            expected: w.cols,
            got: x.len(),
        });
    }
    let mut y = w.matvec(x)?;
    y.iter_mut().zip(b).for_each(|(a, c)| *a += c);
    Ok(y)
}

/// `Exp_o(W_v n + b_v)`.
pub fn encode_node(p: &EncoderParams, m: &ProductManifold, n: &[f64]) -> Result<Point> {
    Ok(Point::new(m.exp_origin(&p.node_tangent(n)?)))
}

/// `Exp_o(W_e e + b_e)`.
pub fn encode_edge(p: &EncoderParams, m: &ProductManifold, e: &[f64]) -> Result<Point> {
    Ok(Point::new(m.exp_origin(&p.edge_tangent(e)?)))
}

/// Encodes every node of a snapshot.
pub fn encode_nodes(p: &EncoderParams, m: &ProductManifold, g: &GraphSnapshot) -> Result<Vec<Point>> {
    (0..g.num_nodes).map(|i| encode_node(p, m, g.node_feature(i))).collect()
}

/// Encodes every edge of a snapshot.
pub fn encode_edges(p: &EncoderParams, m: &ProductManifold, g: &GraphSnapshot) -> Result<Vec<Point>> {
    (0..g.edges.len()).map(|k| encode_edge(p, m, g.edge_feature(k))).collect()
}

/// Message from `x_j` to `x_i` over an edge encoded as `a_ij`, in origin
/// tangent coordinates.
pub fn compute_message(
    p: &EncoderParams,
    m: &ProductManifold,
    x_i: &Point,
    x_j: &Point,
    a_ij: &Point,
) -> Result<Vec<f64>> {
    for x in [x_i, x_j, a_ij] {
        m.validate(x)?;
    }
    let zi = m.log_origin(&x_i.coords)?;
    let zj = m.log_origin(&x_j.coords)?;
    let za = m.log_origin(&a_ij.coords)?;
    message_from_logs(p, &zi, &zj, &za)
}

pub(crate) fn message_from_logs(p: &EncoderParams, zi: &[f64], zj: &[f64], za: &[f64]) -> Result<Vec<f64>> {
    let input = [zi, zj, za].concat();
    let mut out = p.msg_mlp.forward(&input)?;
    out.iter_mut().for_each(|v| *v = v.tanh());
    Ok(out)
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone)]
pub(crate) struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }

    pub(crate) fn add(&mut self, v: &[f64]) {
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(v) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    pub(crate) fn finish(self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

pub(crate) fn check_alignment(m: &ProductManifold, states: &[Point], g: &GraphSnapshot, edge_points: &[Point]) -> Result<()> {
    if states.len() != g.num_nodes {
        return Err(Error::DimensionMismatch {
            context: "node states",
            expected: g.num_nodes,
            got: states.len(),
        });
    }
    if edge_points.len() != g.edges.len() {
        return Err(Error::DimensionMismatch {
            context: "edge points",
            expected: g.edges.len(),
            got: edge_points.len(),
        });
    }
    for x in states.iter().chain(edge_points) {
        if x.coords.len() != m.ambient_dim() {
            return Err(Error::DimensionMismatch {
                context: "point",
                expected: m.ambient_dim(),
                got: x.coords.len(),
            });
        }
    }
    Ok(())
}

/// Summed messages per node in origin tangent coordinates, before `Exp_o`.
pub(crate) fn aggregate_tangents(
    p: &EncoderParams,
    m: &ProductManifold,
    state_logs: &[Vec<f64>],
    g: &GraphSnapshot,
    edge_logs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let t = m.tangent_dim();
    let incoming = g.in_edges();
    incoming
        .par_iter()
        .enumerate()
        .map(|(i, edges)| {
            let mut acc = CompensatedSum::new(t);
            for &k in edges {
                let (src, _) = g.edges[k];
                let msg = message_from_logs(p, &state_logs[i], &state_logs[src], &edge_logs[k])?;
                acc.add(&msg);
            }
            // lifted sums already lie in T_o, so this projection is a no-op up to rounding
            let mut v = m.lift_origin(&acc.finish());
            let o = m.origin();
            m.project_coords(&o.coords, &mut v);
            Ok(m.drop_origin(&v))
        })
        .collect()
}

pub(crate) fn logs_at_origin(m: &ProductManifold, points: &[Point]) -> Result<Vec<Vec<f64>>> {
    points.iter().map(|x| m.log_origin(&x.coords)).collect()
}

/// Geometric aggregation: node `i` maps to `Exp_o(Proj(sum of messages
/// from in-neighbours))`. Nodes without in-neighbours map to the origin.
pub fn aggregate(
    p: &EncoderParams,
    m: &ProductManifold,
    states: &[Point],
    g: &GraphSnapshot,
    edge_points: &[Point],
) -> Result<Vec<Point>> {
    check_alignment(m, states, g, edge_points)?;
    for x in states.iter().chain(edge_points) {
        m.validate(x)?;
    }
    let sl = logs_at_origin(m, states)?;
    let el = logs_at_origin(m, edge_points)?;
    let sums = aggregate_tangents(p, m, &sl, g, &el)?;
    Ok(sums.iter().map(|z| Point::new(m.exp_origin(z))).collect())
}

/// Readout target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutTask {
    NodeRegression,
    LinkPrediction,
}

/// Euclidean heads on `Log_o`: node regression returns `MLP(Log_o x)`;
/// link prediction returns `[sigmoid(MLP([Log_o x; Log_o y]))]`.
pub fn readout(
    m: &ProductManifold,
    head: &Mlp,
    task: ReadoutTask,
    x: &Point,
    y: Option<&Point>,
) -> Result<Vec<f64>> {
    m.validate(x)?;
    let t = m.tangent_dim();
    let input = match task {
        ReadoutTask::NodeRegression => m.log_origin(&x.coords)?,
        ReadoutTask::LinkPrediction => {
            let y = y.ok_or_else(|| Error::InvalidConfig("link prediction needs two points".into()))?;
            m.validate(y)?;
            [m.log_origin(&x.coords)?, m.log_origin(&y.coords)?].concat()
        }
    };
    let expected = match task {
        ReadoutTask::NodeRegression => t,
        ReadoutTask::LinkPrediction => 2 * t,
    };
    if head.input_dim() != Some(expected) {
        return Err(Error::DimensionMismatch {
            context: "readout head input",
            expected,
            got: head.input_dim().unwrap_or(0),
        });
    }
    let out = head.forward(&input)?;
    Ok(match task {
        ReadoutTask::NodeRegression => out,
        ReadoutTask::LinkPrediction => {
            if out.len() != 1 {
                return Err(Error::DimensionMismatch {
                    context: "link head output",
                    expected: 1,
                    got: out.len(),
                });
            }
            vec![sigmoid(out[0])]
        }
    })
}

#[cfg(test)]
mod tests;
