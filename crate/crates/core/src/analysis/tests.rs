use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dynamics::{GateRule, GatedLiquid, LiquidSystem};
use crate::geometry::{DistanceMode, ManifoldSpec, Point};
use crate::solvers::{integrate, reference_solve, stiff_benchmark, Method, SolverConfig};

fn e(n: usize) -> ProductManifold {
    ProductManifold::single(ManifoldSpec::euclidean(n)).unwrap()
}

/// Trajectory on `E^d` with the given samples `z[k][i]`.
fn flat_trajectory(z: &[Vec<Vec<f64>>]) -> Trajectory {
    let step_tangents = z
        .windows(2)
        .map(|w| {
            w[1].iter()
                .zip(&w[0])
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
                .collect()
        })
        .collect();
    Trajectory {
        times: (0..z.len()).map(|k| k as f64).collect(),
        states: z.iter().map(|s| s.iter().map(|c| Point::new(c.clone())).collect()).collect(),
        step_tangents,
    }
}

#[test]
fn tau_bound_boundaries() {
    let tau = vec![0.5, 2.0];
    let r = check_tau_bounds(&[(tau.clone(), vec![0.0, 0.0])]).unwrap();
    assert_eq!(r.violations, 0);
    assert_eq!(r.max_ratio, 1.0);
    assert_eq!(r.min_ratio, 1.0);
    let r = check_tau_bounds(&[(tau, vec![1.0, 1.0])]).unwrap();
    assert_eq!(r.violations, 0);
    assert_eq!(r.min_ratio, (2.0 / 3.0) / 2.0);
    assert_eq!(r.max_ratio, (0.5 / 1.5) / 0.5);
    assert!(check_tau_bounds(&[(vec![1.0], vec![1.5])]).is_err());
}

#[test]
fn tau_bounds_hold_on_gate_samples() {
    let m = ProductManifold::new(vec![ManifoldSpec::hyperboloid(2, 1.0), ManifoldSpec::sphere(2, 1.0)]).unwrap();
    let samples = sample_gate_outputs(&m, 10_000, 3).unwrap();
    assert_eq!(samples.len(), 10_000);
    let saturated = samples.iter().flat_map(|(_, f)| f).filter(|&&f| f < 1e-3 || f > 1.0 - 1e-3).count();
    assert!(saturated > 0);
    let r = check_tau_bounds(&samples).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.samples >= 40_000);
    assert!(r.min_ratio > 0.0 && r.max_ratio <= 1.0);
}

#[test]
fn invariant_ball_examples() {
    // no drive: pure contraction inside the starting radius
    let m = ProductManifold::new(vec![ManifoldSpec::sphere(2, 1.0), ManifoldSpec::hyperboloid(2, 1.0)]).unwrap();
    let t = m.tangent_dim();
    let sys = GatedLiquid::new(m.clone(), vec![0.3; t], vec![0.0; t], GateRule::Constant(vec![0.5; t])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x0: Vec<Point> = (0..5).map(|_| m.random_point(&mut rng, 2.0).unwrap()).collect();
    let tr = integrate(&sys, &x0, &SolverConfig::new(Method::Gd, 0.05, 1, 1.0).unwrap()).unwrap();
    let r = check_invariant_ball(&tr, &sys.tau, &sys.v, &m).unwrap();
    assert!(r.passed());
    assert!(r.max_excess <= 1e-12);
    for i in 0..5 {
        let d: Vec<f64> = tr.node(i).iter().map(|x| m.distance(x, &m.origin(), DistanceMode::L2).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    // start at the origin: the bound is tau |V|
    let e2 = e(2);
    let sys = GatedLiquid::new(e2.clone(), vec![0.5; 2], vec![3.0, 4.0], GateRule::Constant(vec![1.0; 2])).unwrap();
    let tr = integrate(&sys, &[e2.origin()], &SolverConfig::new(Method::Gd, 0.01, 1, 5.0).unwrap()).unwrap();
    let r = check_invariant_ball(&tr, &sys.tau, &sys.v, &e2).unwrap();
    assert_eq!(r.bound, 2.5);
    assert!(r.passed());
    // the splitting step's fixed point h f |V| / (e^{a h} - 1), a = 1/tau + f
    let end = &tr.states.last().unwrap()[0].coords;
    let fixed = 0.01 * 5.0 / ((3.0f64 * 0.01).exp() - 1.0);
    assert!((end[0].hypot(end[1]) - fixed).abs() < 1e-5);
    assert!(fixed < 2.5);
    assert!(check_invariant_ball(&tr, &[1.0], &sys.v, &e2).is_err());
}

#[test]
fn invariant_ball_on_reference_benchmark() {
    for seed in [1, 2] {
        let b = stiff_benchmark(seed, 6);
        let tr = reference_solve(&b.system, &b.initial, b.t_end, b.dt).unwrap();
        let r = check_invariant_ball(&tr, &b.system.tau, &b.system.v, b.system.manifold()).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}

#[test]
fn merged_invariant_ball_over_seeds() {
    let r = benchmark_invariant_ball(1, 3, 1e-3).unwrap();
    assert!(r.passed(), "{r:?}");
    assert!(r.bound > 0.0);
    assert!(benchmark_invariant_ball(1, 0, 1e-3).is_err());
}

#[test]
fn invariant_ball_flags_escape() {
    let m = e(1);
    let tr = flat_trajectory(&[vec![vec![1.0]], vec![vec![2.0]]]);
    let r = check_invariant_ball(&tr, &[1.0], &[0.5], &m).unwrap();
    assert_eq!(r.violations, 1);
    assert_eq!(r.max_excess, 1.0);
    assert_eq!(r.max_relative_excess, 1.0);
}

#[test]
fn trajectory_length_examples() {
    let still = flat_trajectory(&vec![vec![vec![1.0, 2.0]]; 4]);
    assert_eq!(trajectory_length(&still).unwrap(), 0.0);
    let two = flat_trajectory(&[vec![vec![0.0, 0.0]], vec![vec![3.0, 4.0]]]);
    assert_eq!(trajectory_length(&two).unwrap(), 5.0);
    let one = flat_trajectory(&[vec![vec![0.0]]]);
    assert!(matches!(trajectory_length(&one), Err(Error::TooFewSamples { needed: 2, got: 1 })));
    let nodes = flat_trajectory(&[vec![vec![0.0], vec![0.0]], vec![vec![1.0], vec![3.0]]]);
    assert_eq!(node_lengths(&nodes).unwrap(), vec![1.0, 3.0]);
    assert_eq!(trajectory_length(&nodes).unwrap(), 2.0);
}

#[test]
fn trajectory_length_converges_under_refinement() {
    let m = ProductManifold::single(ManifoldSpec::sphere(2, 1.0)).unwrap();
    let sys = GatedLiquid::new(
        m.clone(),
        vec![1.0; 2],
        vec![1.5, -0.5],
        GateRule::Sinusoid {
            gain: 3.0,
            bias: 0.0,
            phases: vec![0.0, 1.0, 2.0],
        },
    )
    .unwrap();
    let x0: Vec<Point> = [[0.5, 0.2], [-1.0, 0.3], [0.1, -0.8]].iter().map(|z| Point::new(m.exp_origin(z))).collect();
    let run = |dt| trajectory_length(&integrate(&sys, &x0, &SolverConfig::new(Method::Gd, dt, 1, 2.0).unwrap()).unwrap()).unwrap();
    let (a, b) = (run(0.01), run(0.005));
    assert!(((a - b) / b).abs() < 0.01, "{a} {b}");
}

#[test]
fn euclidean_tree_embedding() {
    let t = embed_tree_euclidean(3, 2).unwrap();
    assert_eq!(t.tree.len(), 15);
    assert!(t.coords[0].iter().all(|&c| c == 0.0));
    for (v, z) in t.coords.iter().enumerate() {
        assert_eq!(z.iter().map(|c| c * c).sum::<f64>(), t.tree.level[v] as f64);
    }
    // brute-force mean depth of the full binary tree of depth 4
    let t = embed_tree_euclidean(4, 2).unwrap();
    let mut depths = Vec::new();
    let mut frontier = vec![0usize];
    for d in 0..=4 {
        depths.extend(std::iter::repeat_n(d, frontier.len()));
        frontier = frontier.iter().flat_map(|_| [0, 0]).collect();
    }
    let mean = depths.iter().sum::<usize>() as f64 / depths.len() as f64;
    assert_eq!(depths.len(), 31);
    assert!((t.mean_sq_norm() - mean).abs() < 1e-12);
    assert!(matches!(embed_tree_euclidean(11, 2), Err(Error::SizeLimit(_))));
    assert!(embed_tree_euclidean(0, 2).is_err());
    let path = embed_tree_euclidean(5, 1).unwrap();
    assert_eq!(path.tree.len(), 6);
    assert_eq!(path.tree.graph_distance(5, 2), 3);
}

#[test]
fn hyperbolic_tree_embedding() {
    let h = ProductManifold::single(ManifoldSpec::hyperboloid(2, 1.0)).unwrap();
    let t = embed_tree_hyperbolic(3, 2, 0.2).unwrap();
    assert_eq!(t.points[0].coords, vec![1.0, 0.0, 0.0]);
    assert_eq!(t.origin_coords()[0], vec![0.0, 0.0]);
    for v in 1..3 {
        assert!((t.root_distances()[v] - t.nu).abs() < 1e-9);
        assert!((t.distance(0, v) - t.nu).abs() < 1e-9);
    }
    // path composition agrees with the ambient distance where both are accurate
    let small = embed_tree_hyperbolic(2, 3, 0.45).unwrap();
    for u in 0..small.tree.len() {
        for v in 0..small.tree.len() {
            let direct = h.distance(&small.points[u], &small.points[v], DistanceMode::L2).unwrap();
            assert!((small.distance(u, v) - direct).abs() < 1e-6 * (1.0 + direct), "{u} {v}");
        }
    }
    let t = embed_tree_hyperbolic(6, 2, 0.1).unwrap();
    assert!((t.nu - (20.0 * 3f64.ln() + 2.0)).abs() < 1e-12);
    let dist = t.distortion(2000, 5);
    assert!(dist <= 1.1, "distortion {dist}");
    // siblings at the deepest level are far apart
    let leaves = t.tree.len() - 2;
    assert!(t.distance(leaves, leaves + 1) > 1.5 * t.nu);
    match embed_tree_hyperbolic(40, 2, 0.1) {
        Err(Error::PrecisionLoss(msg)) => assert!(msg.contains("largest representable depth is 14"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert!(embed_tree_hyperbolic(3, 2, 0.5).is_err());
}

#[test]
#[allow(clippy::approx_constant)]
fn euclidean_cycle_embedding() {
    let c = embed_cycle_euclidean(4).unwrap();
    assert!((c.radius - 0.70711).abs() < 1e-5);
    for n in [3, 7, 64] {
        let c = embed_cycle_euclidean(n).unwrap();
        for j in 0..n {
            let (a, b) = (&c.coords[j], &c.coords[(j + 1) % n]);
            assert!(((a[0] - b[0]).hypot(a[1] - b[1]) - 1.0).abs() < 1e-12);
            assert!((a[0].hypot(a[1]) - c.radius).abs() < 1e-12);
        }
        assert!(c.radius.powi(2) >= (n * n) as f64 / (4.0 * PI * PI));
    }
    assert!(embed_cycle_euclidean(2).is_err());
}

#[test]
fn spherical_cycle_embedding() {
    assert_eq!(embed_cycle_spherical(5).unwrap().mean_sq_norm(), 2.0);
    assert_eq!(embed_cycle_spherical(4).unwrap().mean_sq_norm(), 1.5);
    for n in 3..=64u64 {
        let c = embed_cycle_spherical(n as usize).unwrap();
        assert_eq!(c.hops[0], 0);
        let want = if n % 2 == 1 { n * (n * n - 1) } else { n * (n * n + 2) };
        assert_eq!(12 * c.sum_sq_norm(), want, "n = {n}");
    }
    let c = embed_cycle_spherical(64).unwrap();
    let ratio = c.mean_sq_norm() / embed_cycle_euclidean(64).unwrap().mean_sq_norm();
    assert!((ratio / (PI * PI / 3.0) - 1.0).abs() < 0.05);
    assert!((c.radius - 64.0 / (2.0 * PI)).abs() < 1e-12);
    assert_eq!(embed_cycle_spherical(5).unwrap().arcs(), vec![0.0, 1.0, 2.0, -2.0, -1.0]);
}

fn quick() -> ExpressivityConfig {
    ExpressivityConfig {
        seeds: 2,
        dt: 0.1,
        ..ExpressivityConfig::default()
    }
}

#[test]
fn expressivity_contract() {
    let tree = Structure::Tree { branching: 2 };
    let run = expressivity_experiment(tree, EmbeddingGeometry::Euclidean, &[3], &quick()).unwrap();
    assert_eq!(run.reports.len(), 1);
    assert!(run.length_slope.is_none() && run.norm_slope.is_none());
    let r = &run.reports[0];
    assert!(r.traj_length > 0.0 && r.mean_sq_norm > 0.0);
    assert!(r.pca_explained.len() <= 4 && !r.pca_explained.is_empty());
    // four periods of a unit sinusoid, sampled every 0.1
    assert!((r.input_length - 16.0).abs() < 0.5, "{}", r.input_length);
    assert!(expressivity_experiment(tree, EmbeddingGeometry::Euclidean, &[], &quick()).is_err());
    assert!(expressivity_experiment(tree, EmbeddingGeometry::Spherical, &[3], &quick()).is_err());
    assert!(expressivity_experiment(Structure::Cycle, EmbeddingGeometry::Hyperbolic { eps: 0.1 }, &[5], &quick()).is_err());
    assert!(matches!(
        expressivity_experiment(Structure::Cycle, EmbeddingGeometry::Spherical, &[6], &quick()),
        Err(Error::DomainError(_))
    ));
    let again = expressivity_experiment(tree, EmbeddingGeometry::Euclidean, &[3], &quick()).unwrap();
    assert_eq!(again, run);
}

#[test]
fn expressivity_scaling() {
    let tree = Structure::Tree { branching: 2 };
    let sizes = [2, 3, 4, 5, 6];
    let h = expressivity_experiment(tree, EmbeddingGeometry::Hyperbolic { eps: 0.1 }, &sizes, &quick()).unwrap();
    let e = expressivity_experiment(tree, EmbeddingGeometry::Euclidean, &sizes, &quick()).unwrap();
    assert!(h.norm_slope.unwrap() > e.norm_slope.unwrap() + 0.5);
    assert!(h.reports.iter().zip(&e.reports).all(|(a, b)| a.mean_sq_norm > b.mean_sq_norm));
    let s = expressivity_experiment(Structure::Cycle, EmbeddingGeometry::Spherical, &[9, 17, 33], &quick()).unwrap();
    let c = expressivity_experiment(Structure::Cycle, EmbeddingGeometry::Euclidean, &[9, 17, 33], &quick()).unwrap();
    for (a, b) in s.reports.iter().zip(&c.reports) {
        assert!(a.mean_sq_norm > b.mean_sq_norm);
        assert!(a.traj_length > b.traj_length);
    }
}

#[test]
fn pca_examples() {
    // samples along one tangent line
    let z: Vec<Vec<Vec<f64>>> = (0..6).map(|k| vec![vec![k as f64, -2.0 * k as f64, 0.5 * k as f64]]).collect();
    let p = pca_trajectory(&flat_trajectory(&z), &e(3), 2).unwrap();
    assert!((p.explained[0] - 1.0).abs() < 1e-12);
    assert!(p.degenerate);
    assert_eq!(p.explained.len(), 1);
    assert!(matches!(pca_trajectory(&flat_trajectory(&z[..2]), &e(3), 2), Err(Error::TooFewSamples { .. })));

    // covariance eigenvalues of a 5-point trajectory
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z: Vec<Vec<Vec<f64>>> = (0..5)
        .map(|_| vec![(0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()])
        .collect();
    let p = pca_trajectory(&flat_trajectory(&z), &e(3), 4).unwrap();
    let rows: Vec<Vec<f64>> = z.iter().map(|s| s.concat()).collect();
    let d = 6;
    let mean: Vec<f64> = (0..d).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / 5.0).collect();
    let cov = DMatrix::from_fn(d, d, |a, b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / 4.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = ev.iter().sum();
    assert!(!p.degenerate);
    assert_eq!(p.spectrum.len(), 4);
    for (k, f) in p.spectrum.iter().enumerate() {
        assert!((f - ev[k] / total).abs() < 1e-10);
    }
    assert!((p.spectrum.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // scores reproduce the centred data
    for (s, row) in rows.iter().enumerate() {
        let sq: f64 = row.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum();
        let proj: f64 = p.projections[s].iter().map(|c| c * c).sum();
        assert!((sq - proj).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn length_is_additive_and_reversible(seed in 0u64..10_000, len in 2usize..12, split in 1usize..11) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<Vec<Vec<f64>>> = (0..len).map(|_| vec![(0..3).map(|_| rng.random_range(-2.0..2.0)).collect()]).collect();
        let whole = trajectory_length(&flat_trajectory(&z)).unwrap();
        prop_assert!(whole >= 0.0);
        let mut rev = z.clone();
        rev.reverse();
        prop_assert!((trajectory_length(&flat_trajectory(&rev)).unwrap() - whole).abs() < 1e-12);
        let k = split.min(len - 1);
        if k >= 1 && k + 1 <= len - 1 {
            let a = trajectory_length(&flat_trajectory(&z[..=k])).unwrap();
            let b = trajectory_length(&flat_trajectory(&z[k..])).unwrap();
            prop_assert!((a + b - whole).abs() < 1e-12);
        }
    }

    #[test]
    fn explained_variance_is_a_distribution(seed in 0u64..10_000, n in 2usize..9, d in 1usize..6, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<Vec<Vec<f64>>> = (0..n.max(k + 1)).map(|_| vec![(0..d).map(|_| rng.random_range(-1.0..1.0)).collect()]).collect();
        let p = pca_trajectory(&flat_trajectory(&z), &e(d), k).unwrap();
        prop_assert!(p.explained.iter().all(|f| (0.0..=1.0).contains(f)));
        prop_assert!(p.explained.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(p.explained.iter().sum::<f64>() <= 1.0 + 1e-9);
        prop_assert!((p.spectrum.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(p.degenerate, p.spectrum.len() < k);
    }

    #[test]
    fn tau_bounds_never_fail(tau in 1e-6f64..1e6, f in 0.0f64..=1.0) {
        let r = check_tau_bounds(&[(vec![tau], vec![f])]).unwrap();
        prop_assert_eq!(r.violations, 0);
    }
}
