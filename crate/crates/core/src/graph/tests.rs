use std::fs;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{DistanceMode, ManifoldSpec, EPS_MANIFOLD};
use crate::nn::Dense;

fn e(n: usize) -> ProductManifold {
    ProductManifold::single(ManifoldSpec::euclidean(n)).unwrap()
}
fn s2() -> ProductManifold {
    ProductManifold::single(ManifoldSpec::sphere(2, 1.0)).unwrap()
}
fn mixed() -> ProductManifold {
    ProductManifold::new(vec![
        ManifoldSpec::hyperboloid(2, 1.0),
        ManifoldSpec::sphere(2, 1.0),
        ManifoldSpec::euclidean(1),
    ])
    .unwrap()
}

fn with_features(n: usize, edges: Vec<(usize, usize)>, dv: usize, de: usize, rng: &mut ChaCha8Rng) -> GraphSnapshot {
    let mut g = GraphSnapshot::from_edges(n, edges, 0.0);
    g.node_features = Matrix::uniform_fan_in(n, dv, rng);
    g.edge_features = Matrix::uniform_fan_in(g.edges.len(), de, rng);
    g
}

/// Message MLP that returns the source coordinates unchanged (before tanh).
fn pass_source(t: usize) -> Mlp {
    let mut w = Matrix::zeros(t, 3 * t);
    for r in 0..t {
        w.set(r, t + r, 1.0);
    }
    Mlp::linear(w, vec![0.0; t]).unwrap()
}

#[test]
fn zero_weights_encode_to_origin() {
    for m in [e(3), s2(), mixed()] {
        let p = EncoderParams::zeros(&m, 4, 2);
        assert_eq!(encode_node(&p, &m, &[1.0, -2.0, 3.0, 0.5]).unwrap(), m.origin());
        assert_eq!(encode_edge(&p, &m, &[7.0, 1.0]).unwrap(), m.origin());
    }
}

#[test]
fn euclidean_encoder_is_affine() {
    let m = e(2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = EncoderParams::random(&m, 3, 2, &[4], &mut rng);
    let n = [0.3, -1.2, 2.0];
    let x = encode_node(&p, &m, &n).unwrap();
    for r in 0..2 {
        let want = p.b_v[r] + (0..3).map(|c| p.w_v.get(r, c) * n[c]).sum::<f64>();
        assert!((x.coords[r] - want).abs() < 1e-15);
    }
    let a = encode_edge(&p, &m, &[1.0, 2.0]).unwrap();
    for r in 0..2 {
        let want = p.b_e[r] + p.w_e.get(r, 0) + 2.0 * p.w_e.get(r, 1);
        assert!((a.coords[r] - want).abs() < 1e-15);
    }
}

#[test]
fn encoder_dimension_errors() {
    let m = s2();
    let p = EncoderParams::zeros(&m, 4, 0);
    assert!(matches!(
        encode_node(&p, &m, &[1.0]),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(encode_edge(&p, &m, &[]).is_ok());
}

#[test]
fn random_encodings_are_valid_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for m in [s2(), mixed()] {
        let p = EncoderParams::random(&m, 5, 3, &[8], &mut rng);
        for _ in 0..500 {
            let n: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
            let ef: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            m.validate(&encode_node(&p, &m, &n).unwrap()).unwrap();
            m.validate(&encode_edge(&p, &m, &ef).unwrap()).unwrap();
        }
    }
}

#[test]
fn message_at_origin_is_zero() {
    let m = mixed();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = EncoderParams::random(&m, 2, 0, &[6], &mut rng);
    for l in &mut p.msg_mlp.layers {
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let o = m.origin();
    let msg = compute_message(&p, &m, &o, &o, &o).unwrap();
    assert!(msg.iter().all(|&v| v == 0.0));
}

#[test]
fn message_hand_computation_on_line() {
    // E^1, MLP: 3 -> 2 (tanh) -> 1, evaluated by hand below.
    let m = e(1);
    let l1 = Dense::new(
        Matrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, -1.0, 2.0]]).unwrap(),
        vec![0.1, 0.0],
        Activation::Tanh,
    )
    .unwrap();
    let l2 = Dense::new(Matrix::from_rows(&[vec![2.0, 1.0]]).unwrap(), vec![-0.3], Activation::Identity).unwrap();
    let mut p = EncoderParams::zeros(&m, 1, 1);
    p.msg_mlp = Mlp::new(vec![l1, l2]).unwrap();
    let (xi, xj, a) = (0.4, -0.7, 0.25);
    let h1 = (xi + 0.5 * xj + 0.1_f64).tanh();
    let h2 = (-xj + 2.0 * a as f64).tanh();
    let want = (2.0 * h1 + h2 - 0.3).tanh();
    let got = compute_message(&p, &m, &Point::new(vec![xi]), &Point::new(vec![xj]), &Point::new(vec![a])).unwrap();
    assert!((got[0] - want).abs() < 1e-15);
}

#[test]
fn message_rejects_invalid_points() {
    let m = s2();
    let p = EncoderParams::zeros(&m, 1, 1);
    let bad = Point::new(vec![2.0, 0.0, 0.0]);
    let o = m.origin();
    assert!(matches!(
        compute_message(&p, &m, &bad, &o, &o),
        Err(Error::ManifoldViolation { .. })
    ));
}

#[test]
fn empty_edge_set_maps_to_origin() {
    let m = mixed();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = EncoderParams::random(&m, 2, 0, &[4], &mut rng);
    let g = with_features(4, vec![], 2, 0, &mut rng);
    let states: Vec<Point> = (0..4).map(|_| m.random_point(&mut rng, 1.0).unwrap()).collect();
    let out = aggregate(&p, &m, &states, &g, &[]).unwrap();
    assert!(out.iter().all(|x| *x == m.origin()));
}

#[test]
fn single_pass_through_edge_reaches_source() {
    // the pass-through message is tanh(Log_o y)
    let m = s2();
    let t = m.tangent_dim();
    let mut p = EncoderParams::zeros(&m, 0, 0);
    p.msg_mlp = pass_source(t);
    let y = m.exp_origin(&[0.3, -0.2]);
    let states = vec![Point::new(y.clone()), m.origin()];
    let g = GraphSnapshot::from_edges(2, vec![(0, 1)], 0.0);
    let out = aggregate(&p, &m, &states, &g, &[m.origin()]).unwrap();
    let want = m.exp_origin(&[0.3_f64.tanh(), (-0.2_f64).tanh()]);
    assert!(m.distance_coords(&out[1].coords, &want, DistanceMode::L2).unwrap() < 1e-12);
    assert_eq!(out[0], m.origin());

    // a constant head with bias atanh(Log_o y) forces the message to Log_o y
    let z = m.log_origin(&y).unwrap();
    let mut q = EncoderParams::zeros(&m, 0, 0);
    let bias: Vec<f64> = z.iter().map(|v| v.atanh()).collect();
    q.msg_mlp = Mlp::linear(Matrix::zeros(t, 3 * t), bias).unwrap();
    let out = aggregate(&q, &m, &states, &g, &[m.origin()]).unwrap();
    assert!(m.distance_coords(&out[1].coords, &y, DistanceMode::L2).unwrap() < 1e-12);
}

#[test]
fn path_graph_matches_direct_sum() {
    let m = e(2);
    let t = 2;
    let mut p = EncoderParams::zeros(&m, 0, 0);
    // message = tanh(x_i + x_j + a)
    let mut w = Matrix::zeros(t, 3 * t);
    for r in 0..t {
        for b in 0..3 {
            w.set(r, b * t + r, 1.0);
        }
    }
    p.msg_mlp = Mlp::linear(w, vec![0.0; t]).unwrap();
    let xs = [[0.1, 0.2], [-0.3, 0.5], [0.7, -0.4]];
    let states: Vec<Point> = xs.iter().map(|c| Point::new(c.to_vec())).collect();
    let g = GraphSnapshot::from_edges(3, vec![(0, 1), (1, 2)], 0.0).symmetrized();
    let a: Vec<Point> = (0..g.edges.len()).map(|k| Point::new(vec![0.01 * k as f64, -0.02])).collect();
    let out = aggregate(&p, &m, &states, &g, &a).unwrap();
    for i in 0..3 {
        let mut want = [0.0; 2];
        for (k, &(src, dst)) in g.edges.iter().enumerate() {
            if dst == i {
                for r in 0..2 {
                    want[r] += (xs[i][r] + xs[src][r] + a[k].coords[r]).tanh();
                }
            }
        }
        for r in 0..2 {
            assert!((out[i].coords[r] - want[r]).abs() < 1e-15);
        }
    }
}

#[test]
fn aggregate_checks_alignment() {
    let m = e(2);
    let p = EncoderParams::zeros(&m, 0, 0);
    let g = GraphSnapshot::from_edges(2, vec![(0, 1)], 0.0);
    let o = m.origin();
    assert!(matches!(
        aggregate(&p, &m, &[o.clone()], &g, &[o.clone()]),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(
        aggregate(&p, &m, &[o.clone(), o.clone()], &g, &[]),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn isolated_nodes_and_random_aggregates() {
    let m = mixed();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let mut p = EncoderParams::random(&m, 3, 2, &[8], &mut rng);
        // large messages before tanh still give valid points
        for l in &mut p.msg_mlp.layers {
            l.weights.data.iter_mut().for_each(|w| *w *= 50.0);
        }
        let n = 12;
        let edges: Vec<(usize, usize)> = (0..30)
            .map(|_| (rng.random_range(0..n - 2), rng.random_range(0..n - 2)))
            .collect();
        let g = with_features(n, edges, 3, 2, &mut rng);
        let states = encode_nodes(&p, &m, &g).unwrap();
        let ep = encode_edges(&p, &m, &g).unwrap();
        let out = aggregate(&p, &m, &states, &g, &ep).unwrap();
        for x in &out {
            m.validate(x).unwrap();
        }
        assert_eq!(out[n - 1], m.origin());
        assert_eq!(out[n - 2], m.origin());
    }
}

#[test]
fn edge_permutation_invariance() {
    let m = mixed();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = EncoderParams::random(&m, 2, 2, &[6], &mut rng);
    let n = 8;
    let edges: Vec<(usize, usize)> = (0..40).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
    let g = with_features(n, edges, 2, 2, &mut rng);
    let states = encode_nodes(&p, &m, &g).unwrap();
    let ep = encode_edges(&p, &m, &g).unwrap();
    let base = aggregate(&p, &m, &states, &g, &ep).unwrap();
    for _ in 0..10 {
        let mut perm: Vec<usize> = (0..g.edges.len()).collect();
        perm.shuffle(&mut rng);
        let mut h = g.clone();
        h.edges = perm.iter().map(|&k| g.edges[k]).collect();
        h.edge_features = Matrix::from_rows(&perm.iter().map(|&k| g.edge_feature(k).to_vec()).collect::<Vec<_>>()).unwrap();
        let hp: Vec<Point> = perm.iter().map(|&k| ep[k].clone()).collect();
        let out = aggregate(&p, &m, &states, &h, &hp).unwrap();
        for (a, b) in base.iter().zip(&out) {
            assert!(a.coords.iter().zip(&b.coords).all(|(u, v)| (u - v).abs() <= 1e-12));
        }
    }
}

#[test]
fn readout_examples() {
    let m = mixed();
    let t = m.tangent_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut head = Mlp::random(&[t, 4, 3], Activation::Tanh, &mut rng);
    for l in &mut head.layers {
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let o = m.origin();
    let out = readout(&m, &head, ReadoutTask::NodeRegression, &o, None).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));

    let mut link = Mlp::random(&[2 * t, 4, 1], Activation::Tanh, &mut rng);
    for l in &mut link.layers {
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    assert_eq!(readout(&m, &link, ReadoutTask::LinkPrediction, &o, Some(&o)).unwrap(), vec![0.5]);
    for _ in 0..100 {
        let x = m.random_point(&mut rng, 3.0).unwrap();
        let y = m.random_point(&mut rng, 3.0).unwrap();
        let pr = readout(&m, &link, ReadoutTask::LinkPrediction, &x, Some(&y)).unwrap()[0];
        assert!(pr > 0.0 && pr < 1.0);
    }
    assert!(readout(&m, &link, ReadoutTask::LinkPrediction, &o, None).is_err());
    assert!(matches!(
        readout(&m, &head, ReadoutTask::LinkPrediction, &o, Some(&o)),
        Err(Error::DimensionMismatch { .. })
    ));

    let e3 = e(3);
    let id = Mlp::linear(Matrix::identity(3), vec![0.0; 3]).unwrap();
    let x = Point::new(vec![1.5, -2.0, 0.25]);
    assert_eq!(readout(&e3, &id, ReadoutTask::NodeRegression, &x, None).unwrap(), x.coords);
}

#[test]
fn params_json_round_trip() {
    let m = mixed();
    let p = EncoderParams::random(&m, 3, 0, &[5], &mut ChaCha8Rng::seed_from_u64(42));
    let back: EncoderParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(back, p);
    back.validate(&m).unwrap();
    assert!(back.validate(&s2()).is_err());
}

#[test]
fn snapshot_validation() {
    let g = GraphSnapshot::from_edges(2, vec![(0, 2)], 0.0);
    assert!(matches!(g.validate(), Err(Error::ValidationError(_))));
    let mut g = GraphSnapshot::from_edges(2, vec![(0, 1)], 0.0);
    g.node_features = Matrix::zeros(3, 1);
    assert!(g.validate().is_err());
}

#[test]
fn load_two_node_fixture() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("edges.csv"), "src,dst\n0,1\n").unwrap();
    fs::write(dir.path().join("nodes.csv"), "node_id,f1\n0,1.5\n1,-2\n").unwrap();
    fs::write(
        dir.path().join("manifest.json"),
        r#"{"directed": true, "snapshots": [{"timestamp": 0, "edges": "edges.csv", "node_features": "nodes.csv"}]}"#,
    )
    .unwrap();
    let g = load_graph(&dir.path().join("manifest.json"), GraphFormat::Manifest).unwrap();
    assert_eq!(g.len(), 1);
    assert_eq!(g[0].num_nodes, 2);
    assert_eq!(g[0].edges, vec![(0, 1)]);
    assert_eq!(g[0].node_feature(1), &[-2.0]);

    let list = dir.path().join("list.csv");
    fs::write(&list, "# comment\n0,1\n").unwrap();
    let g = load_graph(&list, GraphFormat::EdgeList).unwrap();
    assert_eq!((g[0].num_nodes, g[0].edges.len()), (2, 2));
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("edges.csv"), "0,1\n0,5\n").unwrap();
    fs::write(
        dir.path().join("manifest.json"),
        r#"{"num_nodes": 3, "snapshots": [{"timestamp": 0, "edges": "edges.csv"}]}"#,
    )
    .unwrap();
    assert!(matches!(
        load_graph(&dir.path().join("manifest.json"), GraphFormat::Manifest),
        Err(Error::ValidationError(_))
    ));

    fs::write(dir.path().join("edges.csv"), "src,dst\n0,1\n\n1,x\n").unwrap();
    match load_graph(&dir.path().join("manifest.json"), GraphFormat::Manifest) {
        Err(Error::ParseError { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(matches!(
        load_graph(&dir.path().join("missing.json"), GraphFormat::Manifest),
        Err(Error::Io { .. })
    ));
}

#[test]
fn timestamp_column_splits_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("edges.csv"), "0,1,2.0\n1,2,1.0\n2,0,2.0\n").unwrap();
    fs::write(
        dir.path().join("manifest.json"),
        r#"{"directed": true, "snapshots": [{"edges": "edges.csv"}]}"#,
    )
    .unwrap();
    let g = load_graph(&dir.path().join("manifest.json"), GraphFormat::Manifest).unwrap();
    assert_eq!(g.len(), 2);
    assert_eq!(g[0].timestamp, 1.0);
    assert_eq!(g[0].edges, vec![(1, 2)]);
    assert_eq!(g[1].edges, vec![(0, 1), (2, 0)]);
    assert!(g.iter().all(|s| s.num_nodes == 3));
}

#[test]
fn save_load_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let snaps: Vec<GraphSnapshot> = (0..3)
        .map(|k| {
            let edges = (0..5).map(|_| (rng.random_range(0..6), rng.random_range(0..6))).collect();
            let mut g = with_features(6, edges, 3, 2, &mut rng);
            g.timestamp = k as f64 * 0.1 + 1.0 / 3.0;
            g
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = save_graph(dir.path(), &snaps).unwrap();
    let back = load_graph(&path, GraphFormat::Manifest).unwrap();
    assert_eq!(back, snaps);
}

proptest! {
    #[test]
    fn messages_are_bounded(seed in 0u64..1000, scale in 0.1f64..100.0) {
        let m = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = EncoderParams::random(&m, 1, 1, &[4], &mut rng);
        for l in &mut p.msg_mlp.layers {
            l.weights.data.iter_mut().for_each(|w| *w *= scale);
        }
        let x = m.random_point(&mut rng, 2.0).unwrap();
        let y = m.random_point(&mut rng, 2.0).unwrap();
        let a = m.random_point(&mut rng, 2.0).unwrap();
        let msg = compute_message(&p, &m, &x, &y, &a).unwrap();
        prop_assert!(msg.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn aggregates_are_valid(seed in 0u64..1000) {
        let m = s2();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = EncoderParams::random(&m, 0, 0, &[], &mut rng);
        let n = 6;
        let edges: Vec<(usize, usize)> = (0..15).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let g = GraphSnapshot::from_edges(n, edges, 0.0);
        let states: Vec<Point> = (0..n).map(|_| m.random_point(&mut rng, 3.0).unwrap()).collect();
        let ep = vec![m.origin(); g.edges.len()];
        for x in aggregate(&p, &m, &states, &g, &ep).unwrap() {
            let r: f64 = x.coords.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((r - 1.0).abs() < EPS_MANIFOLD);
        }
    }
}
