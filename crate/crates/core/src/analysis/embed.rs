//! Tree and cycle embeddings with known tangent norms.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Largest node count accepted by [`embed_tree_euclidean`], whose
/// dimension grows with the node count.
pub const EUCLIDEAN_TREE_CAP: usize = 2048;

/// Hyperbolic distances beyond this would overflow `cosh`.
const MAX_HYPERBOLIC_DISTANCE: f64 = 700.0;

/// Full `b`-ary tree of depth `D`, nodes in breadth-first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullTree {
    pub depth: usize,
    pub branching: usize,
    pub parent: Vec<Option<usize>>,
    pub level: Vec<usize>,
}

impl FullTree {
    pub fn new(depth: usize, branching: usize, cap: usize) -> Result<Self> {
        if depth == 0 || branching == 0 {
            return Err(Error::InvalidConfig(format!(
                "tree needs depth >= 1 and branching >= 1, got depth {depth}, branching {branching}"
            )));
        }
        let mut count: usize = 1;
        let mut width: usize = 1;
        for _ in 0..depth {
            width = width.saturating_mul(branching);
            count = count.saturating_add(width);
            if count > cap {
                return Err(Error::SizeLimit(format!("tree of depth {depth}, branching {branching} exceeds {cap} nodes")));
            }
        }
        let mut parent = vec![None];
        let mut level = vec![0];
        let mut start = 0;
        for d in 1..=depth {
            let end = parent.len();
            for p in start..end {
                for _ in 0..branching {
                    parent.push(Some(p));
                    level.push(d);
                }
            }
            start = end;
        }
        Ok(Self {
            depth,
            branching,
            parent,
            level,
        })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Position of `v` among its siblings.
    fn child_index(&self, v: usize) -> usize {
        (v - 1) % self.branching
    }

    pub fn mean_depth(&self) -> f64 {
        self.level.iter().sum::<usize>() as f64 / self.len() as f64
    }

    /// Hop distance, via the lowest common ancestor.
    pub fn graph_distance(&self, mut u: usize, mut v: usize) -> usize {
        let mut d = 0;
        while self.level[u] > self.level[v] {
            u = self.parent[u].unwrap();
            d += 1;
        }
        while self.level[v] > self.level[u] {
            v = self.parent[v].unwrap();
            d += 1;
        }
        while u != v {
            u = self.parent[u].unwrap();
            v = self.parent[v].unwrap();
            d += 2;
        }
        d
    }
}

/// Tree embedded in Euclidean space with `f(v) = f(parent) + e_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanTree {
    pub tree: FullTree,
    /// Coordinates of each node, of dimension `len - 1`.
    pub coords: Vec<Vec<f64>>,
}

impl EuclideanTree {
    pub fn dim(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn mean_sq_norm(&self) -> f64 {
        mean_sq(&self.coords)
    }
}

pub fn embed_tree_euclidean(depth: usize, branching: usize) -> Result<EuclideanTree> {
    let tree = FullTree::new(depth, branching, EUCLIDEAN_TREE_CAP)?;
    let dim = tree.len() - 1;
    let mut coords = vec![vec![0.0; dim]];
    for v in 1..tree.len() {
        let mut z = coords[tree.parent[v].unwrap()].clone();
        z[v - 1] = 1.0;
        coords.push(z);
    }
    Ok(EuclideanTree { tree, coords })
}

/// Edge length `(2/eps) ln(b + 1) + 2` of the hyperbolic tree embedding.
pub fn hyperbolic_edge_length(branching: usize, eps: f64) -> f64 {
    2.0 / eps * ((branching + 1) as f64).ln() + 2.0
}

/// Tree embedded in the hyperbolic plane (curvature -1) by placing every
/// child at distance `nu` from its parent, with the edges at each node
/// spread evenly in angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicTree {
    pub tree: FullTree,
    pub eps: f64,
    pub nu: f64,
    /// Direction of the edge from the parent, in the parent's frame.
    pub angle: Vec<f64>,
    /// Hyperboloid coordinates `(x_0, x_1, x_2)` with the root at the origin.
    pub points: Vec<Point>,
}

fn rotation(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn boost(d: f64) -> Matrix3<f64> {
    let (ch, sh) = (d.cosh(), d.sinh());
    Matrix3::new(ch, sh, 0.0, sh, ch, 0.0, 0.0, 0.0, 1.0)
}

impl HyperbolicTree {
    /// Move from the parent's frame to `v`'s frame.
    fn down(&self, v: usize) -> Matrix3<f64> {
        rotation(self.angle[v]) * boost(self.nu)
    }

    fn up(&self, v: usize) -> Matrix3<f64> {
        boost(-self.nu) * rotation(-self.angle[v])
    }

    /// Geodesic distance, composed along the tree path so that siblings
    /// deep in the tree stay distinguishable.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        let t = &self.tree;
        let (mut a, mut b) = (u, v);
        let mut ups = Vec::new();
        let mut downs = Vec::new();
        while t.level[a] > t.level[b] {
            ups.push(a);
            a = t.parent[a].unwrap();
        }
        while t.level[b] > t.level[a] {
            downs.push(b);
            b = t.parent[b].unwrap();
        }
        while a != b {
            ups.push(a);
            downs.push(b);
            a = t.parent[a].unwrap();
            b = t.parent[b].unwrap();
        }
        let mut y = Vector3::new(1.0, 0.0, 0.0);
        for &w in &downs {
            y = self.down(w) * y;
        }
        for &w in ups.iter().rev() {
            y = self.up(w) * y;
        }
        y[0].max(1.0).acosh()
    }

    /// Distance of every node from the root.
    pub fn root_distances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.coords[0].max(1.0).acosh()).collect()
    }

    /// `Log_o` of every node.
    pub fn origin_coords(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .zip(self.root_distances())
            .map(|(p, r)| {
                let s = (p.coords[1].powi(2) + p.coords[2].powi(2)).sqrt();
                if s == 0.0 {
                    vec![0.0, 0.0]
                } else {
                    vec![r * p.coords[1] / s, r * p.coords[2] / s]
                }
            })
            .collect()
    }

    pub fn mean_sq_norm(&self) -> f64 {
        let r = self.root_distances();
        r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64
    }

    /// Ratio of the largest to the smallest `d_H / d_G` over `pairs`
    /// random node pairs together with every tree edge.
    pub fn distortion(&self, pairs: usize, seed: u64) -> f64 {
        let n = self.tree.len();
        if n < 2 {
            return 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set: Vec<(usize, usize)> = (1..n).map(|v| (self.tree.parent[v].unwrap(), v)).collect();
        while set.len() < n - 1 + pairs {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v {
                set.push((u, v));
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (u, v) in set {
            let ratio = self.distance(u, v) / self.tree.graph_distance(u, v) as f64;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        hi / lo
    }
}

pub fn embed_tree_hyperbolic(depth: usize, branching: usize, eps: f64) -> Result<HyperbolicTree> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::DomainError(format!("eps must lie in (0, 0.5), got {eps}")));
    }
    let nu = hyperbolic_edge_length(branching, eps);
    let max_depth = (MAX_HYPERBOLIC_DISTANCE / (2.0 * nu)).floor() as usize;
    if depth > max_depth {
        return Err(Error::PrecisionLoss(format!(
            "depth {depth} with edge length {nu:.3} exceeds double range; largest representable depth is {max_depth}"
        )));
    }
    let tree = FullTree::new(depth, branching, usize::MAX)?;
    let b = branching as f64;
    let angle: Vec<f64> = (0..tree.len())
        .map(|v| match tree.parent[v] {
            None => 0.0,
            Some(0) => 2.0 * PI * tree.child_index(v) as f64 / b,
            Some(_) => PI + 2.0 * PI * (tree.child_index(v) + 1) as f64 / (b + 1.0),
        })
        .collect();
    let mut frames: Vec<Matrix3<f64>> = Vec::with_capacity(tree.len());
    frames.push(Matrix3::identity());
    let mut out = HyperbolicTree {
        tree,
        eps,
        nu,
        angle,
        points: Vec::new(),
    };
    for v in 1..out.tree.len() {
        let f = frames[out.tree.parent[v].unwrap()] * out.down(v);
        frames.push(f);
    }
    out.points = frames.iter().map(|f| Point::new(f.column(0).iter().cloned().collect())).collect();
    Ok(out)
}

/// Cycle on a Euclidean circle of radius `1 / (2 sin(pi/n))` about the
/// origin, so adjacent nodes are at unit distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEuclidean {
    pub radius: f64,
    pub coords: Vec<Vec<f64>>,
}

impl CycleEuclidean {
    pub fn mean_sq_norm(&self) -> f64 {
        mean_sq(&self.coords)
    }
}

pub fn embed_cycle_euclidean(n: usize) -> Result<CycleEuclidean> {
    check_cycle(n)?;
    let radius = 1.0 / (2.0 * (PI / n as f64).sin());
    let coords = (0..n)
        .map(|j| {
            let (s, c) = (2.0 * PI * j as f64 / n as f64).sin_cos();
            vec![radius * c, radius * s]
        })
        .collect();
    Ok(CycleEuclidean { radius, coords })
}

/// Cycle placed isometrically on a circle of circumference `n`, based at
/// node 0. Tangent norms are hop counts along the shorter arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSpherical {
    pub radius: f64,
    pub hops: Vec<u64>,
}

impl CycleSpherical {
    pub fn sum_sq_norm(&self) -> u64 {
        self.hops.iter().map(|h| h * h).sum()
    }

    pub fn mean_sq_norm(&self) -> f64 {
        self.sum_sq_norm() as f64 / self.hops.len() as f64
    }

    /// Signed arc position of each node in `(-n/2, n/2]`.
    pub fn arcs(&self) -> Vec<f64> {
        let n = self.hops.len();
        (0..n)
            .map(|j| if 2 * j <= n { j as f64 } else { j as f64 - n as f64 })
            .collect()
    }
}

pub fn embed_cycle_spherical(n: usize) -> Result<CycleSpherical> {
    check_cycle(n)?;
    let hops = (0..n).map(|j| j.min(n - j) as u64).collect();
    Ok(CycleSpherical {
        radius: n as f64 / (2.0 * PI),
        hops,
    })
}

fn check_cycle(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!("cycle needs at least 3 nodes, got {n}")));
    }
    Ok(())
}

fn mean_sq(z: &[Vec<f64>]) -> f64 {
    z.iter().map(|v| v.iter().map(|c| c * c).sum::<f64>()).sum::<f64>() / z.len() as f64
}
