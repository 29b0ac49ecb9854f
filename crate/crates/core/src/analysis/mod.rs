//! Stability checks, trajectory length, tree and cycle embeddings, the
//! expressivity harness and PCA of trajectories.

mod embed;
mod expressivity;
mod stability;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use embed::{
    embed_cycle_euclidean, embed_cycle_spherical, embed_tree_euclidean, embed_tree_hyperbolic, hyperbolic_edge_length,
    CycleEuclidean, CycleSpherical, EuclideanTree, FullTree, HyperbolicTree, EUCLIDEAN_TREE_CAP,
};
pub use expressivity::{
    expressivity_experiment, EmbeddingGeometry, ExpressivityConfig, ExpressivityReport, ExpressivityRun, Structure,
};

pub use stability::{benchmark_invariant_ball, sample_gate_outputs};

use crate::dynamics::tau_sys;
use crate::error::{Error, Result};
use crate::geometry::ProductManifold;
use crate::solvers::Trajectory;

/// Outcome of [`check_tau_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauBoundReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest and largest `tau_sys / tau` seen.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Checks `tau/(1+tau) <= tau_sys <= tau` coordinate-wise on every `(tau, f)` sample.
pub fn check_tau_bounds(samples: &[(Vec<f64>, Vec<f64>)]) -> Result<TauBoundReport> {
    let mut r = TauBoundReport {
        samples: 0,
        violations: 0,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
    };
    for (tau, f) in samples {
        let ts = tau_sys(tau, f)?;
        for (&t, &s) in tau.iter().zip(&ts) {
            r.samples += 1;
            if !(t / (1.0 + t) <= s && s <= t) {
                r.violations += 1;
            }
            r.min_ratio = r.min_ratio.min(s / t);
            r.max_ratio = r.max_ratio.max(s / t);
        }
    }
    Ok(r)
}

/// Outcome of [`check_invariant_ball`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantBallReport {
    /// Largest `d_i(x_i(t), o_i) - bound_i` over nodes, factors and times.
    pub max_excess: f64,
    /// The bound at which `max_excess` was attained.
    pub bound: f64,
    /// Largest excess divided by its bound.
    pub max_relative_excess: f64,
    /// Node-factor pairs whose relative excess exceeds the tolerance.
    pub violations: usize,
}

impl InvariantBallReport {
    pub const TOLERANCE: f64 = 1e-4;

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Compares each factor's distance to the origin against
/// `max(d_i(x_i(0), o_i), tau_i |V_i|)`, with `tau_i` the largest time
/// constant on the factor's block.
pub fn check_invariant_ball(traj: &Trajectory, tau: &[f64], v: &[f64], m: &ProductManifold) -> Result<InvariantBallReport> {
    let t = m.tangent_dim();
    for (name, len) in [("tau", tau.len()), ("driving vector", v.len())] {
        if len != t {
            return Err(Error::DimensionMismatch {
                context: name,
                expected: t,
                got: len,
            });
        }
    }
    if traj.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let o = m.origin();
    let v_norms = m.factor_norms_coords(&m.lift_origin(v));
    let tau_i: Vec<f64> = (0..m.num_factors())
        .map(|i| tau[m.tangent_range(i)].iter().cloned().fold(0.0, f64::max))
        .collect();
    let mut r = InvariantBallReport {
        max_excess: f64::NEG_INFINITY,
        bound: 0.0,
        max_relative_excess: f64::NEG_INFINITY,
        violations: 0,
    };
    for node in 0..traj.num_nodes() {
        let d0 = m.factor_distances_coords(&traj.states[0][node].coords, &o.coords)?;
        let bounds: Vec<f64> = (0..m.num_factors()).map(|i| d0[i].max(tau_i[i] * v_norms[i])).collect();
        let mut worst = vec![f64::NEG_INFINITY; m.num_factors()];
        for s in &traj.states {
            let d = m.factor_distances_coords(&s[node].coords, &o.coords)?;
            for i in 0..d.len() {
                worst[i] = worst[i].max(d[i] - bounds[i]);
            }
        }
        for i in 0..worst.len() {
            let rel = worst[i] / bounds[i].max(f64::MIN_POSITIVE);
            if worst[i] > r.max_excess {
                r.max_excess = worst[i];
                r.bound = bounds[i];
            }
            r.max_relative_excess = r.max_relative_excess.max(rel);
            if worst[i] > InvariantBallReport::TOLERANCE * bounds[i] {
                r.violations += 1;
            }
        }
    }
    Ok(r)
}

/// Per-node length of the origin-tangent curve, `sum_k |Z_{k+1} - Z_k|`.
pub fn node_lengths(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: traj.len(),
        });
    }
    let mut out = vec![0.0; traj.num_nodes()];
    for step in &traj.step_tangents {
        for (l, d) in out.iter_mut().zip(step) {
            *l += d.iter().map(|c| c * c).sum::<f64>().sqrt();
        }
    }
    Ok(out)
}

/// Mean over nodes of [`node_lengths`].
pub fn trajectory_length(traj: &Trajectory) -> Result<f64> {
    let l = node_lengths(traj)?;
    Ok(if l.is_empty() { 0.0 } else { l.iter().sum::<f64>() / l.len() as f64 })
}

/// Principal components of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// Scores of each sample on the returned components.
    pub projections: Vec<Vec<f64>>,
    /// Fraction of total variance per returned component, nonincreasing.
    pub explained: Vec<f64>,
    /// Fractions of every nonzero component; sums to 1.
    pub spectrum: Vec<f64>,
    /// Fewer than the requested number of components carry variance.
    pub degenerate: bool,
}

/// PCA of the mean-centred system state `(Log_o x_1, ..., Log_o x_N)` over
/// the samples of `traj`. Uses the sample Gram matrix, so the cost is
/// quadratic in the number of samples and linear in the state dimension.
pub fn pca_trajectory(traj: &Trajectory, m: &ProductManifold, k: usize) -> Result<Pca> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one component".into()));
    }
    if traj.len() < k + 1 {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            got: traj.len(),
        });
    }
    let per_node: Vec<Vec<Vec<f64>>> = (0..traj.num_nodes())
        .map(|i| traj.origin_coords(m, i))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..traj.len())
        .map(|s| per_node.iter().flat_map(|z| z[s].iter().cloned()).collect())
        .collect();
    pca_rows(&rows, k)
}

pub(crate) fn pca_rows(rows: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(a, b)| *a += b / n as f64);
    }
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum::<f64>());
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lambda.iter().sum();
    let cutoff = 1e-12 * lambda.first().copied().unwrap_or(0.0);
    let rank = if total > 0.0 { lambda.iter().filter(|&&l| l > cutoff).count() } else { 0 };
    let spectrum: Vec<f64> = lambda[..rank].iter().map(|l| l / total).collect();
    let kept = k.min(rank);
    let projections = (0..n)
        .map(|s| {
            order[..kept]
                .iter()
                .zip(&lambda)
                .map(|(&c, l)| eig.eigenvectors[(s, c)] * l.sqrt())
                .collect()
        })
        .collect();
    Ok(Pca {
        projections,
        explained: spectrum[..kept].to_vec(),
        spectrum,
        degenerate: rank < k,
    })
}

#[cfg(test)]
mod tests;
