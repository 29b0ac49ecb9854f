//! Sampling drivers for the time-constant and invariant-ball checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_invariant_ball, InvariantBallReport};
use crate::dynamics::{GraphLiquid, LiquidParams, LiquidSystem};
use crate::error::{Error, Result};
use crate::geometry::{Point, ProductManifold};
use crate::graph::GraphSnapshot;
use crate::nn::Matrix;
use crate::solvers::{reference_solve, stiff_benchmark};

/// Gate outputs of randomly parameterized graph liquids on `m`, paired with
/// their time constants. Time constants are log-uniform in `[1e-3, 1e3]` and
/// state weights are amplified so gates reach saturation.
pub fn sample_gate_outputs(m: &ProductManifold, count: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 50;
    let mut samples = Vec::with_capacity(count);
    while samples.len() < count {
        let mut p = LiquidParams::random(m, 3, 0, &[8], 1.0, &mut rng);
        p.tau = (0..m.tangent_dim()).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
        p.w_x.data.iter_mut().for_each(|w| *w *= 20.0);
        let edges = (0..3 * n).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let mut g = GraphSnapshot::from_edges(n, edges, 0.0);
        g.node_features = Matrix::uniform_fan_in(n, 3, &mut rng);
        let sys = GraphLiquid::new(p.clone(), m.clone(), vec![g])?;
        let states: Vec<Point> = (0..n).map(|_| m.random_point(&mut rng, 3.0)).collect::<Result<_>>()?;
        for f in sys.gates(0.0, &states)? {
            if samples.len() == count {
                break;
            }
            samples.push((p.tau.clone(), f));
        }
    }
    Ok(samples)
}

/// Invariant-ball check over `count` single-trajectory stiff benchmarks with
/// seeds `base_seed..base_seed + count`, each solved by the reference solver.
pub fn benchmark_invariant_ball(base_seed: u64, count: usize, reference_dt: f64) -> Result<InvariantBallReport> {
    if count == 0 {
        return Err(Error::InvalidConfig("need at least one trajectory".into()));
    }
    let mut merged = InvariantBallReport {
        max_excess: f64::NEG_INFINITY,
        bound: 0.0,
        max_relative_excess: f64::NEG_INFINITY,
        violations: 0,
    };
    for k in 0..count as u64 {
        let b = stiff_benchmark(base_seed.wrapping_add(k), 1);
        let tr = reference_solve(&b.system, &b.initial, b.t_end, reference_dt)?;
        let r = check_invariant_ball(&tr, &b.system.tau, &b.system.v, b.system.manifold())?;
        if r.max_excess > merged.max_excess {
            merged.max_excess = r.max_excess;
            merged.bound = r.bound;
        }
        merged.max_relative_excess = merged.max_relative_excess.max(r.max_relative_excess);
        merged.violations += r.violations;
    }
    Ok(merged)
}
