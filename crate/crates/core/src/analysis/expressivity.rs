//! Trajectory length of liquid dynamics started from tree and cycle embeddings.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{embed_cycle_euclidean, embed_cycle_spherical, embed_tree_euclidean, embed_tree_hyperbolic};
use super::{pca_trajectory, trajectory_length};
use crate::dynamics::{GateRule, GatedLiquid};
use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::geometry::{ManifoldSpec, Point, ProductManifold};
use crate::solvers::{integrate, Method, SolverConfig};

/// Graph family; the experiment size is the depth for trees and the node
/// count for cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Structure {
    Tree { branching: usize },
    Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingGeometry {
    Euclidean,
    Hyperbolic { eps: f64 },
    Spherical,
}

impl EmbeddingGeometry {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingGeometry::Euclidean => "euclidean",
            EmbeddingGeometry::Hyperbolic { .. } => "hyperbolic",
            EmbeddingGeometry::Spherical => "spherical",
        }
    }
}

/// Dynamics used by [`expressivity_experiment`]. Each node is gated by
/// `sigmoid(gain * sin(2 pi t + phase_i) + bias)` with random phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityConfig {
    pub tau: f64,
    pub v_norm: f64,
    pub gain: f64,
    pub bias: f64,
    pub t_end: f64,
    pub dt: f64,
    pub unfold: usize,
    pub seeds: usize,
    pub seed: u64,
    pub pca_components: usize,
}

impl Default for ExpressivityConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            v_norm: 1.0,
            gain: 4.0,
            bias: 0.0,
            t_end: 4.0,
            dt: 0.05,
            unfold: 1,
            seeds: 10,
            seed: 42,
            pca_components: 4,
        }
    }
}

impl ExpressivityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.v_norm >= 0.0 && self.v_norm.is_finite()) {
            return Err(Error::InvalidConfig(format!("v_norm must be nonnegative, got {}", self.v_norm)));
        }
        if !(self.gain.is_finite() && self.bias.is_finite()) {
            return Err(Error::InvalidConfig("gate gain and bias must be finite".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("need at least one seed".into()));
        }
        if self.pca_components == 0 {
            return Err(Error::InvalidConfig("need at least one PCA component".into()));
        }
        SolverConfig::new(Method::Gd, self.dt, self.unfold, self.t_end).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityReport {
    pub structure: Structure,
    pub size: usize,
    pub geometry: String,
    /// Mean over nodes of `|Log_o x_j|^2` at the start.
    pub mean_sq_norm: f64,
    /// Mean over nodes, then seeds, of the origin-tangent curve length.
    pub traj_length: f64,
    /// Discrete length of the scalar input signal, averaged over nodes and seeds.
    pub input_length: f64,
    /// Variance fractions of the leading components for the first seed.
    pub pca_explained: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityRun {
    pub reports: Vec<ExpressivityReport>,
    /// Log-log slope of `traj_length` against size.
    pub length_slope: Option<f64>,
    /// Log-log slope of `mean_sq_norm` against size.
    pub norm_slope: Option<f64>,
}

struct Start {
    manifold: ProductManifold,
    points: Vec<Point>,
    mean_sq_norm: f64,
}

fn start(structure: Structure, geometry: EmbeddingGeometry, size: usize) -> Result<Start> {
    let from_origin = |m: ProductManifold, z: Vec<Vec<f64>>| {
        let mean_sq_norm = z.iter().map(|v| v.iter().map(|c| c * c).sum::<f64>()).sum::<f64>() / z.len() as f64;
        let points = z.iter().map(|v| Point::new(m.exp_origin(v))).collect();
        Start {
            manifold: m,
            points,
            mean_sq_norm,
        }
    };
    match (structure, geometry) {
        (Structure::Tree { branching }, EmbeddingGeometry::Euclidean) => {
            let t = embed_tree_euclidean(size, branching)?;
            let m = ProductManifold::single(ManifoldSpec::euclidean(t.dim()))?;
            Ok(from_origin(m, t.coords))
        }
        (Structure::Tree { branching }, EmbeddingGeometry::Hyperbolic { eps }) => {
            // rescaled to unit hops so the states stay where hyperboloid
            // coordinates are well conditioned
            let t = embed_tree_hyperbolic(size, branching, eps)?;
            let z = t
                .origin_coords()
                .into_iter()
                .map(|v| v.into_iter().map(|c| c / t.nu).collect())
                .collect();
            let m = ProductManifold::single(ManifoldSpec::hyperboloid(2, 1.0))?;
            Ok(from_origin(m, z))
        }
        (Structure::Cycle, EmbeddingGeometry::Euclidean) => {
            let c = embed_cycle_euclidean(size)?;
            let m = ProductManifold::single(ManifoldSpec::euclidean(2))?;
            Ok(from_origin(m, c.coords))
        }
        (Structure::Cycle, EmbeddingGeometry::Spherical) => {
            let c = embed_cycle_spherical(size)?;
            if size.is_multiple_of(2) {
                return Err(Error::DomainError(format!(
                    "cycle of even size {size} puts a node at the antipode of the base node"
                )));
            }
            let m = ProductManifold::single(ManifoldSpec::sphere(1, c.radius))?;
            let z = c.arcs().into_iter().map(|a| vec![a]).collect();
            Ok(from_origin(m, z))
        }
        (s, g) => Err(Error::InvalidConfig(format!("{s:?} cannot be embedded in {} geometry", g.name()))),
    }
}

fn run_size(structure: Structure, geometry: EmbeddingGeometry, size: usize, cfg: &ExpressivityConfig) -> Result<ExpressivityReport> {
    let s = start(structure, geometry, size)?;
    let m = &s.manifold;
    let n = s.points.len();
    let solver = SolverConfig::new(Method::Gd, cfg.dt, cfg.unfold, cfg.t_end)?;
    let times = solver.report_times();
    let mut lengths = Vec::with_capacity(cfg.seeds);
    let mut inputs = Vec::with_capacity(cfg.seeds);
    let mut pca_explained = Vec::new();
    for k in 0..cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        let phases: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let dir = m.random_unit_tangent_coords(&m.origin().coords, &mut rng);
        let v = m.drop_origin(&dir).iter().map(|c| c * cfg.v_norm).collect();
        let sys = GatedLiquid::new(
            m.clone(),
            vec![cfg.tau; m.tangent_dim()],
            v,
            GateRule::Sinusoid {
                gain: cfg.gain,
                bias: cfg.bias,
                phases: phases.clone(),
            },
        )?;
        let traj = integrate(&sys, &s.points, &solver)?;
        lengths.push(trajectory_length(&traj)?);
        let input: f64 = phases
            .iter()
            .map(|ph| {
                times
                    .windows(2)
                    .map(|w| ((2.0 * PI * w[1] + ph).sin() - (2.0 * PI * w[0] + ph).sin()).abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        inputs.push(input);
        if k == 0 {
            pca_explained = pca_trajectory(&traj, m, cfg.pca_components.min(times.len() - 1))?.explained;
        }
    }
    Ok(ExpressivityReport {
        structure,
        size,
        geometry: m.label(),
        mean_sq_norm: s.mean_sq_norm,
        traj_length: lengths.iter().sum::<f64>() / lengths.len() as f64,
        input_length: inputs.iter().sum::<f64>() / inputs.len() as f64,
        pca_explained,
    })
}

/// Runs the liquid dynamics from each embedding size and collects lengths,
/// mean squared norms and their scaling exponents.
pub fn expressivity_experiment(
    structure: Structure,
    geometry: EmbeddingGeometry,
    sizes: &[usize],
    cfg: &ExpressivityConfig,
) -> Result<ExpressivityRun> {
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("size list is empty".into()));
    }
    cfg.validate()?;
    for &s in sizes {
        start(structure, geometry, s)?;
    }
    let reports: Vec<ExpressivityReport> = sizes
        .par_iter()
        .map(|&s| run_size(structure, geometry, s, cfg))
        .collect::<Result<_>>()?;
    let (mut length_slope, mut norm_slope) = (None, None);
    if sizes.len() >= 2 {
        let x: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        let l: Vec<f64> = reports.iter().map(|r| r.traj_length).collect();
        let z: Vec<f64> = reports.iter().map(|r| r.mean_sq_norm).collect();
        length_slope = Some(loglog_slope(&x, &l)?);
        norm_slope = Some(loglog_slope(&x, &z)?);
    }
    Ok(ExpressivityRun {
        reports,
        length_slope,
        norm_slope,
    })
}
