//! The liquid ODE on a product manifold.
//!
//! Per node, with gate `f` and time constants `tau` given on the free
//! tangent coordinates at the origin,
//!
//! ```text
//! dx/dt = Proj_x( (1/tau + f) * Log_x(o) + f * P_{o->x}(V) )
//! ```
//!
//! where `*` is the coordinate-wise product taken on ambient coordinates
//! (see [`ProductManifold::lift_weights`]).

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, ProductManifold, Tangent};
use crate::graph::{self, EncoderParams, GraphSnapshot};
use crate::nn::{sigmoid, Matrix};

/// Parameters of the liquid system. `v` holds the driving vector in free
/// tangent coordinates at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidParams {
    pub tau: Vec<f64>,
    pub v: Vec<f64>,
    pub w_x: Matrix,
    pub w_i: Matrix,
    pub b: Vec<f64>,
    pub encoder: EncoderParams,
}

impl LiquidParams {
    /// `tau = 1`, `V` a random direction at the origin scaled to `v_norm`,
    /// gate and encoder weights fan-in uniform.
    pub fn random<R: Rng + ?Sized>(
        m: &ProductManifold,
        node_dim: usize,
        edge_dim: usize,
        msg_hidden: &[usize],
        v_norm: f64,
        rng: &mut R,
    ) -> Self {
        let t = m.tangent_dim();
        let o = m.origin();
        let dir = m.random_unit_tangent_coords(&o.coords, rng);
        let v = m.drop_origin(&dir).iter().map(|c| c * v_norm).collect();
        let w_x = Matrix::uniform_fan_in(t, t, rng);
        let w_i = Matrix::uniform_fan_in(t, t, rng);
        let bound = 1.0 / (t.max(1) as f64).sqrt();
        let b = (0..t).map(|_| rng.random_range(-bound..=bound)).collect();
        let encoder = EncoderParams::random(m, node_dim, edge_dim, msg_hidden, rng);
        Self {
            tau: vec![1.0; t],
            v,
            w_x,
            w_i,
            b,
            encoder,
        }
    }

    pub fn validate(&self, m: &ProductManifold) -> Result<()> {
        let t = m.tangent_dim();
        check_len("tau", t, self.tau.len())?;
        check_len("driving vector", t, self.v.len())?;
        check_len("gate bias", t, self.b.len())?;
        for (context, w) in [("state gate weights", &self.w_x), ("input gate weights", &self.w_i)] {
            w.check()?;
            check_len(context, t, w.rows)?;
            check_len(context, t, w.cols)?;
        }
        if let Some(bad) = self.tau.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {bad}")));
        }
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("driving vector must be finite".into()));
        }
        self.encoder.validate(m)
    }

    /// The driving vector as a tangent at the origin.
    pub fn drive(&self, m: &ProductManifold) -> Tangent {
        Tangent::new(m.origin(), m.lift_origin(&self.v))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::ParseError {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { context, expected, got });
    }
    Ok(())
}

/// Gate values for every node: `sigmoid(W_x Log_o(AGG_i) + W_I (W_v n_i + b_v) + b)`.
pub fn gate(
    p: &LiquidParams,
    m: &ProductManifold,
    states: &[Point],
    snapshot: &GraphSnapshot,
    edge_points: &[Point],
) -> Result<Vec<Vec<f64>>> {
    graph::check_alignment(m, states, snapshot, edge_points)?;
    for x in states.iter().chain(edge_points) {
        m.validate(x)?;
    }
    let sl = graph::logs_at_origin(m, states)?;
    let el = graph::logs_at_origin(m, edge_points)?;
    gate_from_logs(p, m, &sl, snapshot, &el)
}

fn gate_from_logs(
    p: &LiquidParams,
    m: &ProductManifold,
    state_logs: &[Vec<f64>],
    g: &GraphSnapshot,
    edge_logs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let sums = graph::aggregate_tangents(&p.encoder, m, state_logs, g, edge_logs)?;
    sums.par_iter()
        .enumerate()
        .map(|(i, s)| {
            // Log_o(Exp_o(s)) is s up to the hyperbolic saturation clamp
            let agg = m.log_origin(&m.exp_origin(s))?;
            let input = p.encoder.node_tangent(g.node_feature(i))?;
            let a = p.w_x.matvec(&agg)?;
            let c = p.w_i.matvec(&input)?;
            Ok(a.iter()
                .zip(&c)
                .zip(&p.b)
                .map(|((a, c), b)| sigmoid(a + c + b))
                .collect())
        })
        .collect()
}

/// Field at a single point in ambient coordinates. `drive` is the ambient
/// driving vector at the origin.
pub fn field_coords(m: &ProductManifold, x: &[f64], tau: &[f64], f: &[f64], drive: &[f64]) -> Result<Vec<f64>> {
    let t = m.tangent_dim();
    check_len("tau", t, tau.len())?;
    check_len("gate", t, f.len())?;
    let o = m.origin();
    let to_o = m.log_coords(x, &o.coords)?;
    let pv = m.transport_coords(&o.coords, x, drive)?;
    let rate: Vec<f64> = tau.iter().zip(f).map(|(t, f)| 1.0 / t + f).collect();
    let wa = m.lift_weights(&rate);
    let wf = m.lift_weights(f);
    let mut u: Vec<f64> = (0..x.len()).map(|k| wa[k] * to_o[k] + wf[k] * pv[k]).collect();
    m.project_coords(x, &mut u);
    Ok(u)
}

/// The liquid vector field at `states[node]` with the network gate.
pub fn vector_field(
    p: &LiquidParams,
    m: &ProductManifold,
    states: &[Point],
    snapshot: &GraphSnapshot,
    edge_points: &[Point],
    node: usize,
) -> Result<Tangent> {
    if node >= states.len() {
        return Err(Error::DimensionMismatch {
            context: "node index",
            expected: states.len(),
            got: node,
        });
    }
    let f = gate(p, m, states, snapshot, edge_points)?;
    let x = &states[node];
    let u = field_coords(m, &x.coords, &p.tau, &f[node], &m.lift_origin(&p.v))?;
    Ok(Tangent::new(x.clone(), u))
}

/// `-(1/tau_sys) x + f V`, the flat liquid time-constant field.
pub fn euclidean_ltc_field(tau: &[f64], f: &[f64], v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = tau.len();
    for (context, got) in [("gate", f.len()), ("driving vector", v.len()), ("state", x.len())] {
        check_len(context, n, got)?;
    }
    let ts = tau_sys(tau, f)?;
    Ok((0..n).map(|k| -x[k] / ts[k] + f[k] * v[k]).collect())
}

/// System time constant `tau / (1 + tau f)`.
pub fn tau_sys(tau: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    check_len("gate", tau.len(), f.len())?;
    tau.iter()
        .zip(f)
        .map(|(&t, &g)| {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::DomainError(format!("gate value {g} outside [0, 1]")));
            }
            if !(t > 0.0) {
                return Err(Error::DomainError(format!("tau must be positive, got {t}")));
            }
            Ok(t / (1.0 + t * g))
        })
        .collect()
}

/// A liquid system the solvers can integrate: fixed `tau` and `V`, and a
/// gate that may depend on time and on all node states.
pub trait LiquidSystem: Sync {
    fn manifold(&self) -> &ProductManifold;
    fn tau(&self) -> &[f64];
    /// Driving vector in free tangent coordinates at the origin.
    fn drive(&self) -> &[f64];
    /// Gate values per node, each of length `tangent_dim`.
    fn gates(&self, t: f64, states: &[Point]) -> Result<Vec<Vec<f64>>>;
}

/// Network-gated system over a snapshot sequence. The snapshot in force at
/// time `t` is the last one with `timestamp <= t` (the first before that).
pub struct GraphLiquid {
    params: LiquidParams,
    manifold: ProductManifold,
    snapshots: Vec<GraphSnapshot>,
    edge_logs: Vec<Vec<Vec<f64>>>,
}

impl GraphLiquid {
    pub fn new(params: LiquidParams, manifold: ProductManifold, mut snapshots: Vec<GraphSnapshot>) -> Result<Self> {
        params.validate(&manifold)?;
        if snapshots.is_empty() {
            return Err(Error::ValidationError("no snapshots".into()));
        }
        snapshots.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let n = snapshots[0].num_nodes;
        let mut edge_logs = Vec::with_capacity(snapshots.len());
        for s in &snapshots {
            s.validate()?;
            if s.num_nodes != n {
                return Err(Error::ValidationError("snapshots disagree on node count".into()));
            }
            let ep = graph::encode_edges(&params.encoder, &manifold, s)?;
            edge_logs.push(graph::logs_at_origin(&manifold, &ep)?);
        }
        Ok(Self {
            params,
            manifold,
            snapshots,
            edge_logs,
        })
    }

    pub fn params(&self) -> &LiquidParams {
        &self.params
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    pub fn num_nodes(&self) -> usize {
        self.snapshots[0].num_nodes
    }

    /// Node encodings of the first snapshot, the usual initial state.
    pub fn initial_states(&self) -> Result<Vec<Point>> {
        graph::encode_nodes(&self.params.encoder, &self.manifold, &self.snapshots[0])
    }

    pub fn snapshot_index(&self, t: f64) -> usize {
        self.snapshots
            .partition_point(|s| s.timestamp <= t + 1e-12 * (1.0 + t.abs()))
            .saturating_sub(1)
    }
}

impl LiquidSystem for GraphLiquid {
    fn manifold(&self) -> &ProductManifold {
        &self.manifold
    }

    fn tau(&self) -> &[f64] {
        &self.params.tau
    }

    fn drive(&self) -> &[f64] {
        &self.params.v
    }

    fn gates(&self, t: f64, states: &[Point]) -> Result<Vec<Vec<f64>>> {
        let k = self.snapshot_index(t);
        let g = &self.snapshots[k];
        if states.len() != g.num_nodes {
            return Err(Error::DimensionMismatch {
                context: "node states",
                expected: g.num_nodes,
                got: states.len(),
            });
        }
        let sl = graph::logs_at_origin(&self.manifold, states)?;
        gate_from_logs(&self.params, &self.manifold, &sl, g, &self.edge_logs[k])
    }
}

/// Gate rules that do not look at the graph.
#[derive(Clone)]
pub enum GateRule {
    /// The same vector for every node at every time.
    Constant(Vec<f64>),
    /// A scalar function of time, broadcast to every coordinate and node.
    Schedule(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// `sigmoid(gain * sin(2 pi t + phase_i) + bias)` per node, broadcast
    /// to every coordinate.
    Sinusoid { gain: f64, bias: f64, phases: Vec<f64> },
}

impl std::fmt::Debug for GateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GateRule::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            GateRule::Schedule(_) => f.write_str("Schedule(..)"),
            GateRule::Sinusoid { gain, bias, phases } => f
                .debug_struct("Sinusoid")
                .field("gain", gain)
                .field("bias", bias)
                .field("phases", phases)
                .finish(),
        }
    }
}

/// Liquid system whose gate follows a [`GateRule`].
#[derive(Debug, Clone)]
pub struct GatedLiquid {
    pub manifold: ProductManifold,
    pub tau: Vec<f64>,
    pub v: Vec<f64>,
    pub rule: GateRule,
}

impl GatedLiquid {
    pub fn new(manifold: ProductManifold, tau: Vec<f64>, v: Vec<f64>, rule: GateRule) -> Result<Self> {
        let t = manifold.tangent_dim();
        check_len("tau", t, tau.len())?;
        check_len("driving vector", t, v.len())?;
        if let Some(bad) = tau.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {bad}")));
        }
        if let GateRule::Constant(f) = &rule {
            check_len("gate", t, f.len())?;
            if f.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::DomainError("constant gate outside [0, 1]".into()));
            }
        }
        Ok(Self { manifold, tau, v, rule })
    }
}

impl LiquidSystem for GatedLiquid {
    fn manifold(&self) -> &ProductManifold {
        &self.manifold
    }

    fn tau(&self) -> &[f64] {
        &self.tau
    }

    fn drive(&self) -> &[f64] {
        &self.v
    }

    fn gates(&self, t: f64, states: &[Point]) -> Result<Vec<Vec<f64>>> {
        let d = self.manifold.tangent_dim();
        Ok(match &self.rule {
            GateRule::Constant(f) => vec![f.clone(); states.len()],
            GateRule::Schedule(s) => vec![vec![s(t); d]; states.len()],
            GateRule::Sinusoid { gain, bias, phases } => {
                check_len("sinusoid phases", states.len(), phases.len())?;
                phases
                    .iter()
                    .map(|ph| {
                        let u = (2.0 * std::f64::consts::PI * t + ph).sin();
                        vec![sigmoid(gain * u + bias); d]
                    })
                    .collect()
            }
        })
    }
}

/// Field of every node of `sys` at time `t`, with precomputed gates.
pub fn system_field(sys: &dyn LiquidSystem, states: &[Point], gates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = sys.manifold();
    let drive = m.lift_origin(sys.drive());
    states
        .par_iter()
        .zip(gates)
        .map(|(x, f)| field_coords(m, &x.coords, sys.tau(), f, &drive))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ManifoldSpec, EPS_MANIFOLD};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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
            ManifoldSpec::euclidean(2),
        ])
        .unwrap()
    }

    fn graph_with(n: usize, dv: usize, rng: &mut ChaCha8Rng) -> GraphSnapshot {
        let edges = (0..2 * n).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let mut g = GraphSnapshot::from_edges(n, edges, 0.0);
        g.node_features = Matrix::uniform_fan_in(n, dv, rng);
        g
    }

    fn zero_gate(p: &mut LiquidParams) {
        p.w_x.data.iter_mut().for_each(|w| *w = 0.0);
        p.w_i.data.iter_mut().for_each(|w| *w = 0.0);
    }

    #[test]
    fn gate_examples() {
        let m = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = LiquidParams::random(&m, 3, 0, &[4], 1.0, &mut rng);
        let g = graph_with(5, 3, &mut rng);
        let states = graph::encode_nodes(&p.encoder, &m, &g).unwrap();
        let ep = vec![m.origin(); g.edges.len()];
        zero_gate(&mut p);
        p.b.iter_mut().for_each(|b| *b = 0.0);
        let f = gate(&p, &m, &states, &g, &ep).unwrap();
        assert!(f.iter().flatten().all(|&v| v == 0.5));
        p.b.iter_mut().for_each(|b| *b = 30.0);
        let f = gate(&p, &m, &states, &g, &ep).unwrap();
        assert!(f.iter().flatten().all(|&v| v > 1.0 - 1e-9 && v <= 1.0));
    }

    #[test]
    fn gate_hand_evaluation_on_line() {
        // E^1, two nodes, edge 0 -> 1, message = tanh(x_i + 2 x_j)
        let m = e(1);
        let mut p = LiquidParams::random(&m, 1, 0, &[], 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        p.encoder = EncoderParams::zeros(&m, 1, 0);
        p.encoder.w_v = Matrix::from_rows(&[vec![0.5]]).unwrap();
        p.encoder.b_v = vec![0.1];
        p.encoder.msg_mlp = crate::nn::Mlp::linear(Matrix::from_rows(&[vec![1.0, 2.0, 0.0]]).unwrap(), vec![0.0]).unwrap();
        p.w_x = Matrix::from_rows(&[vec![1.5]]).unwrap();
        p.w_i = Matrix::from_rows(&[vec![-2.0]]).unwrap();
        p.b = vec![0.3];
        let mut g = GraphSnapshot::from_edges(2, vec![(0, 1)], 0.0);
        g.node_features = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let states = vec![Point::new(vec![0.2]), Point::new(vec![-0.4])];
        let f = gate(&p, &m, &states, &g, &[m.origin()]).unwrap();
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let f0 = s(-2.0 * (0.5 + 0.1) + 0.3);
        let agg1 = (-0.4_f64 + 2.0 * 0.2).tanh();
        let f1 = s(1.5 * agg1 - 2.0 * (-0.5 + 0.1) + 0.3);
        assert!((f[0][0] - f0).abs() < 1e-15);
        assert!((f[1][0] - f1).abs() < 1e-15);
    }

    #[test]
    fn field_at_origin_is_gated_drive() {
        let m = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LiquidParams::random(&m, 2, 0, &[4], 1.0, &mut rng);
        let g = graph_with(3, 2, &mut rng);
        let mut states = graph::encode_nodes(&p.encoder, &m, &g).unwrap();
        states[0] = m.origin();
        let ep = vec![m.origin(); g.edges.len()];
        let f = gate(&p, &m, &states, &g, &ep).unwrap();
        let field = vector_field(&p, &m, &states, &g, &ep, 0).unwrap();
        let want: Vec<f64> = f[0].iter().zip(&p.v).map(|(a, b)| a * b).collect();
        let got = m.drop_origin(&field.coords);
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(field.coords.iter().zip(m.lift_origin(&want)).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn closed_gate_gives_pure_decay() {
        let m = s2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = LiquidParams::random(&m, 2, 0, &[4], 1.0, &mut rng);
        zero_gate(&mut p);
        p.b = vec![-30.0; 2];
        p.tau = vec![0.5; 2];
        let g = graph_with(4, 2, &mut rng);
        let states: Vec<Point> = (0..4).map(|_| m.random_point(&mut rng, 2.0).unwrap()).collect();
        let ep = vec![m.origin(); g.edges.len()];
        for i in 0..4 {
            let field = vector_field(&p, &m, &states, &g, &ep, i).unwrap();
            let want = m.log_coords(&states[i].coords, &m.origin().coords).unwrap();
            assert!(field.coords.iter().zip(&want).all(|(a, b)| (a - 2.0 * b).abs() < 1e-12));
        }
    }

    #[test]
    fn euclidean_field_matches_direct_formula() {
        let m = e(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = LiquidParams::random(&m, 2, 0, &[4], 1.0, &mut rng);
        p.tau = vec![0.7, 2.0];
        let g = graph_with(5, 2, &mut rng);
        let states: Vec<Point> = (0..5).map(|_| m.random_point(&mut rng, 3.0).unwrap()).collect();
        let ep = vec![m.origin(); g.edges.len()];
        let f = gate(&p, &m, &states, &g, &ep).unwrap();
        for i in 0..5 {
            let field = vector_field(&p, &m, &states, &g, &ep, i).unwrap();
            let x = &states[i].coords;
            for k in 0..2 {
                let want = (1.0 / p.tau[k] + f[i][k]) * (-x[k]) + f[i][k] * p.v[k];
                assert!((field.coords[k] - want).abs() < 1e-12);
            }
            let ltc = euclidean_ltc_field(&p.tau, &f[i], &p.v, x).unwrap();
            assert!(ltc.iter().zip(&field.coords).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn ltc_and_tau_sys_examples() {
        let tau = [0.5, 2.0];
        assert_eq!(euclidean_ltc_field(&tau, &[0.0, 0.0], &[1.0, 1.0], &[1.0, 4.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(euclidean_ltc_field(&tau, &[1.0, 1.0], &[3.0, -1.0], &[0.0, 0.0]).unwrap(), vec![3.0, -1.0]);
        assert!(euclidean_ltc_field(&tau, &[1.0], &[3.0, -1.0], &[0.0, 0.0]).is_err());
        assert_eq!(tau_sys(&tau, &[0.0, 0.0]).unwrap(), tau.to_vec());
        assert_eq!(tau_sys(&tau, &[1.0, 1.0]).unwrap(), vec![0.5 / 1.5, 2.0 / 3.0]);
        assert_eq!(tau_sys(&[2.0], &[0.5]).unwrap(), vec![1.0]);
        assert!(matches!(tau_sys(&[1.0], &[1.5]), Err(Error::DomainError(_))));
        assert!(matches!(tau_sys(&[1.0], &[-0.1]), Err(Error::DomainError(_))));
    }

    #[test]
    fn tau_sys_bounds_on_gate_samples() {
        let m = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut count = 0;
        while count < 10_000 {
            let mut p = LiquidParams::random(&m, 3, 0, &[4], 1.0, &mut rng);
            p.w_x.data.iter_mut().for_each(|w| *w *= 10.0);
            p.tau = (0..m.tangent_dim()).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
            let g = graph_with(10, 3, &mut rng);
            let states = graph::encode_nodes(&p.encoder, &m, &g).unwrap();
            let ep = vec![m.origin(); g.edges.len()];
            for f in gate(&p, &m, &states, &g, &ep).unwrap() {
                let ts = tau_sys(&p.tau, &f).unwrap();
                for k in 0..ts.len() {
                    let t = p.tau[k];
                    assert!(t / (1.0 + t) - ts[k] <= 1e-15 * t && ts[k] - t <= 1e-15 * t);
                    count += 1;
                }
            }
        }
    }

    #[test]
    fn field_is_tangent() {
        let m = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let p = LiquidParams::random(&m, 2, 0, &[4], 2.0, &mut rng);
            let g = graph_with(4, 2, &mut rng);
            let states: Vec<Point> = (0..4).map(|_| m.random_point(&mut rng, 2.5).unwrap()).collect();
            let ep = vec![m.origin(); g.edges.len()];
            for i in 0..4 {
                let field = vector_field(&p, &m, &states, &g, &ep, i).unwrap();
                m.validate_tangent(&field).unwrap();
                let pairing = m.factor_inners(&states[i].coords, &field.coords);
                assert!(pairing[..2].iter().all(|v| v.abs() < EPS_MANIFOLD));
            }
        }
    }

    fn radial_check(m: &ProductManifold, sys: &dyn LiquidSystem, rng: &mut ChaCha8Rng, blockwise: bool) {
        for _ in 0..200 {
            let states: Vec<Point> = (0..6).map(|_| m.random_point(rng, 3.0).unwrap()).collect();
            let mut gates = sys.gates(rng.random_range(0.0..1.0), &states).unwrap();
            if blockwise {
                for f in &mut gates {
                    for k in 0..m.num_factors() {
                        let r = m.tangent_range(k);
                        let mean = f[r.clone()].iter().sum::<f64>() / r.len() as f64;
                        f[r].iter_mut().for_each(|v| *v = mean);
                    }
                }
            }
            let fields = system_field(sys, &states, &gates).unwrap();
            let vn = m.factor_norms_coords(&m.lift_origin(sys.drive()));
            for (x, u) in states.iter().zip(&fields) {
                let to_o = m.log_coords(&x.coords, &m.origin().coords).unwrap();
                let d = m.factor_distances_coords(&x.coords, &m.origin().coords).unwrap();
                for k in 0..m.num_factors() {
                    let tau = sys.tau()[m.tangent_range(k)].iter().cloned().fold(0.0, f64::max);
                    if d[k] > tau * vn[k] {
                        let r = m.factor_range(k);
                        let ip = m.factors()[k].inner(&to_o[r.clone()], &u[r]);
                        assert!(ip >= -1e-12, "factor {k}: {ip}");
                    }
                }
            }
        }
    }

    struct NetSystem {
        m: ProductManifold,
        p: LiquidParams,
        g: GraphSnapshot,
    }

    impl LiquidSystem for NetSystem {
        fn manifold(&self) -> &ProductManifold {
            &self.m
        }
        fn tau(&self) -> &[f64] {
            &self.p.tau
        }
        fn drive(&self) -> &[f64] {
            &self.p.v
        }
        fn gates(&self, _t: f64, states: &[Point]) -> Result<Vec<Vec<f64>>> {
            let ep = vec![self.m.origin(); self.g.edges.len()];
            gate(&self.p, &self.m, states, &self.g, &ep)
        }
    }

    #[test]
    fn field_is_radially_dissipative_outside_the_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (m, blockwise) in [(s2(), false), (e(3), false), (mixed(), true)] {
            let mut p = LiquidParams::random(&m, 2, 0, &[4], 3.0, &mut rng);
            p.tau = (0..m.tangent_dim()).map(|_| rng.random_range(0.05..1.0)).collect();
            if blockwise {
                for k in 0..m.num_factors() {
                    let t = rng.random_range(0.05..1.0);
                    p.tau[m.tangent_range(k)].iter_mut().for_each(|v| *v = t);
                }
            }
            let g = graph_with(6, 2, &mut rng);
            let sys = NetSystem { m: m.clone(), p, g };
            radial_check(&m, &sys, &mut rng, blockwise);
        }
    }

    #[test]
    fn gated_systems() {
        let m = s2();
        let sched = GatedLiquid::new(
            m.clone(),
            vec![0.05; 2],
            vec![2.0, 0.0],
            GateRule::Schedule(Arc::new(|t: f64| sigmoid(10.0 * (2.0 * std::f64::consts::PI * t).sin()))),
        )
        .unwrap();
        let states = vec![m.origin(); 3];
        let f = sched.gates(0.25, &states).unwrap();
        assert_eq!(f.len(), 3);
        assert!((f[0][0] - sigmoid(10.0)).abs() < 1e-15 && f[0][1] == f[0][0]);

        let sin = GatedLiquid::new(
            m.clone(),
            vec![1.0; 2],
            vec![1.0, 0.0],
            GateRule::Sinusoid { gain: 2.0, bias: 0.0, phases: vec![0.0, std::f64::consts::FRAC_PI_2, 1.0] },
        )
        .unwrap();
        let f = sin.gates(0.0, &states).unwrap();
        assert_eq!(f[0][0], 0.5);
        assert!((f[1][0] - sigmoid(2.0)).abs() < 1e-15);
        assert!(sin.gates(0.0, &states[..2]).is_err());

        assert!(GatedLiquid::new(m.clone(), vec![1.0; 2], vec![0.0; 2], GateRule::Constant(vec![2.0; 2])).is_err());
        assert!(GatedLiquid::new(m.clone(), vec![0.0; 2], vec![0.0; 2], GateRule::Constant(vec![0.5; 2])).is_err());
        let c = GatedLiquid::new(m, vec![1.0; 2], vec![0.0; 2], GateRule::Constant(vec![0.25, 0.75])).unwrap();
        assert_eq!(c.gates(3.0, &states).unwrap()[2], vec![0.25, 0.75]);
    }

    #[test]
    fn graph_liquid_holds_snapshots() {
        let m = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = LiquidParams::random(&m, 2, 0, &[4], 1.0, &mut rng);
        let snaps: Vec<GraphSnapshot> = (0..3)
            .map(|k| {
                let mut g = graph_with(5, 2, &mut rng);
                g.timestamp = k as f64;
                g
            })
            .rev()
            .collect();
        let sys = GraphLiquid::new(p.clone(), m.clone(), snaps).unwrap();
        assert_eq!(sys.snapshot_index(-1.0), 0);
        assert_eq!(sys.snapshot_index(0.5), 0);
        assert_eq!(sys.snapshot_index(1.0), 1);
        assert_eq!(sys.snapshot_index(7.0), 2);
        let x0 = sys.initial_states().unwrap();
        let g1 = &sys.snapshots()[1];
        let ep = graph::encode_edges(&p.encoder, &m, g1).unwrap();
        assert_eq!(sys.gates(1.5, &x0).unwrap(), gate(&p, &m, &x0, g1, &ep).unwrap());
        let fields = system_field(&sys, &x0, &sys.gates(1.5, &x0).unwrap()).unwrap();
        let direct = vector_field(&p, &m, &x0, g1, &ep, 2).unwrap();
        assert_eq!(fields[2], direct.coords);
    }

    #[test]
    fn params_json_and_validation() {
        let m = mixed();
        let p = LiquidParams::random(&m, 3, 2, &[4], 1.0, &mut ChaCha8Rng::seed_from_u64(42));
        p.validate(&m).unwrap();
        assert!(p.tau.iter().all(|&t| t == 1.0));
        let vn: f64 = p.v.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((vn - 1.0).abs() < 1e-12);
        let back = LiquidParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let mut bad = p.clone();
        bad.tau[0] = 0.0;
        assert!(bad.validate(&m).is_err());
        assert!(p.validate(&s2()).is_err());
        assert!(LiquidParams::from_json("{").is_err());
    }
}
