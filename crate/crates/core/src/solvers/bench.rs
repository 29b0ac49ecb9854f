//! Stiff benchmark, convergence study and solver comparison.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{advance, integrate, integrate_with, reference_solve_with, Method, SolverConfig, Trajectory};
use crate::dynamics::{GateRule, GatedLiquid, LiquidSystem};
use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::geometry::{DistanceMode, ManifoldSpec, Point, ProductManifold};
use crate::nn::sigmoid;

/// A gated system with its starting points and sampling grid.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub system: GatedLiquid,
    pub initial: Vec<Point>,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
}

/// `sigmoid(10 sin(2 pi t))`.
pub fn stiff_schedule(t: f64) -> f64 {
    sigmoid(10.0 * (2.0 * std::f64::consts::PI * t).sin())
}

/// S^2 with `R = 1`, `tau = 0.05`, a fixed random drive of norm 2 at the
/// origin, the gate schedule [`stiff_schedule`], `count` uniformly random
/// starting points, horizon 2 and reported step 0.05.
pub fn stiff_benchmark(seed: u64, count: usize) -> Benchmark {
    let m = ProductManifold::single(ManifoldSpec::sphere(2, 1.0)).expect("valid sphere");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = m.origin();
    let dir = m.random_unit_tangent_coords(&o.coords, &mut rng);
    let v: Vec<f64> = m.drop_origin(&dir).iter().map(|c| 2.0 * c).collect();
    let initial = (0..count)
        .map(|_| loop {
            let g: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-8 {
                let mut p = g.iter().map(|x| x / n).collect::<Vec<f64>>();
                m.reproject(&mut p);
                // stay clear of the antipode of the origin, where Log_x(o) is undefined
                if p[0] > -1.0 + 1e-6 {
                    break Point::new(p);
                }
            }
        })
        .collect();
    let system = GatedLiquid::new(m, vec![0.05; 2], v, GateRule::Schedule(Arc::new(stiff_schedule))).expect("valid system");
    Benchmark {
        system,
        initial,
        t_end: 2.0,
        dt: 0.05,
        seed,
    }
}

/// Nonstiff companion on the unit sphere: `tau = 1`, constant gate 0.5, a
/// random drive of norm 1, `count` starts within distance 1.5 of the
/// origin, horizon 2 and reported step 0.1.
pub fn smooth_benchmark(seed: u64, count: usize) -> Benchmark {
    let m = ProductManifold::single(ManifoldSpec::sphere(2, 1.0)).expect("valid sphere");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = m.random_unit_tangent_coords(&m.origin().coords, &mut rng);
    let v = m.drop_origin(&dir);
    let initial = (0..count).map(|_| m.random_point(&mut rng, 1.5).expect("valid radius")).collect();
    let system = GatedLiquid::new(m, vec![1.0; 2], v, GateRule::Constant(vec![0.5; 2])).expect("valid system");
    Benchmark {
        system,
        initial,
        t_end: 2.0,
        dt: 0.1,
        seed,
    }
}

fn check_aligned(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() || a.num_nodes() != b.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "trajectory samples",
            expected: b.len() * b.num_nodes(),
            got: a.len() * a.num_nodes(),
        });
    }
    if a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-9 * (1.0 + t.abs())) {
        return Err(Error::ValidationError("trajectories are sampled at different times".into()));
    }
    Ok(())
}

/// Largest L2 product distance between matched samples.
pub fn trajectory_error(m: &ProductManifold, a: &Trajectory, reference: &Trajectory) -> Result<f64> {
    check_aligned(a, reference)?;
    let mut worst: f64 = 0.0;
    for (sa, sb) in a.states.iter().zip(&reference.states) {
        for (x, y) in sa.iter().zip(sb) {
            worst = worst.max(m.distance_coords(&x.coords, &y.coords, DistanceMode::L2)?);
        }
    }
    Ok(worst)
}

/// Per-node largest L2 product distance over matched samples, averaged over nodes.
pub fn global_error(m: &ProductManifold, a: &Trajectory, reference: &Trajectory) -> Result<f64> {
    check_aligned(a, reference)?;
    let n = a.num_nodes();
    let mut per_node = vec![0.0f64; n];
    for (sa, sb) in a.states.iter().zip(&reference.states) {
        for ((w, x), y) in per_node.iter_mut().zip(sa).zip(sb) {
            *w = w.max(m.distance_coords(&x.coords, &y.coords, DistanceMode::L2)?);
        }
    }
    Ok(if n == 0 { 0.0 } else { per_node.iter().sum::<f64>() / n as f64 })
}

/// Mean L2 product distance over nodes and reported times after the start.
pub fn mean_abs_error(m: &ProductManifold, a: &Trajectory, reference: &Trajectory) -> Result<f64> {
    check_aligned(a, reference)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (sa, sb) in a.states.iter().zip(&reference.states).skip(1) {
        for (x, y) in sa.iter().zip(sb) {
            sum += m.distance_coords(&x.coords, &y.coords, DistanceMode::L2)?;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Reference trajectory sampled every `report_dt`.
pub fn reference_for(sys: &dyn LiquidSystem, initial: &[Point], t_end: f64, report_dt: f64, reference_dt: f64) -> Result<Trajectory> {
    reference_solve_with(sys, initial, t_end, report_dt, reference_dt)
}

/// Keeps every `stride`-th sample.
fn subsample(t: &Trajectory, stride: usize) -> Trajectory {
    let idx: Vec<usize> = (0..t.len()).step_by(stride).collect();
    Trajectory {
        times: idx.iter().map(|&k| t.times[k]).collect(),
        states: idx.iter().map(|&k| t.states[k].clone()).collect(),
        step_tangents: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub method: Method,
    pub unfold: usize,
    /// `(dt, global error)` in the order given; see [`global_error`].
    pub pairs: Vec<(f64, f64)>,
    /// Worst node's error per step size; see [`trajectory_error`].
    pub worst: Vec<f64>,
    pub slope: f64,
}

/// Global error of `method` for each step size against one reference run
/// sampled on the finest grid. Every `dt` must be a multiple of the smallest.
pub fn convergence_study(
    sys: &dyn LiquidSystem,
    initial: &[Point],
    t_end: f64,
    method: Method,
    unfold: usize,
    dts: &[f64],
    reference_dt: f64,
) -> Result<ConvergenceReport> {
    if dts.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: dts.len(),
        });
    }
    let finest = dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let strides: Vec<usize> = dts
        .iter()
        .map(|&dt| {
            let r = dt / finest;
            let s = r.round();
            let n = t_end / dt;
            if (r - s).abs() > 1e-9 * r || (n - n.round()).abs() > 1e-9 * n {
                Err(Error::InvalidConfig(format!(
                    "step {dt} must be a multiple of {finest} and divide the horizon {t_end}"
                )))
            } else {
                Ok(s as usize)
            }
        })
        .collect::<Result<_>>()?;
    let reference = reference_for(sys, initial, t_end, finest, reference_dt)?;
    let m = sys.manifold();
    let mut pairs = Vec::with_capacity(dts.len());
    let mut worst = Vec::with_capacity(dts.len());
    for (&dt, &stride) in dts.iter().zip(&strides) {
        let cfg = SolverConfig::new(method, dt, unfold, t_end)?;
        let traj = integrate_with(sys, initial, &cfg, reference_dt)?;
        let r = subsample(&reference, stride);
        pairs.push((dt, global_error(m, &traj, &r)?));
        worst.push(trajectory_error(m, &traj, &r)?);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
    let slope = loglog_slope(&x, &y)?;
    Ok(ConvergenceReport {
        method,
        unfold,
        pairs,
        worst,
        slope,
    })
}

/// One line of the solver comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub unfold: usize,
    pub dt: f64,
    pub mae: f64,
    pub time_relative: f64,
    pub seed: u64,
    /// Node 0 of the run, for plotting.
    #[serde(skip)]
    pub sample: Vec<Point>,
}

/// Euler, RK4, GD(1) and GD(4) on the benchmark at its reported step. MAE is
/// against the reference solver; time is the median of `timing_runs`
/// single-threaded wall-clock runs, relative to Euler.
pub fn solver_bench(b: &Benchmark, timing_runs: usize, reference_dt: f64) -> Result<Vec<BenchRow>> {
    let sys = &b.system;
    let reference = reference_for(sys, &b.initial, b.t_end, b.dt, reference_dt)?;
    let m = sys.manifold();
    let variants = [(Method::Euler, 1), (Method::Rk4, 1), (Method::Gd, 1), (Method::Gd, 4)];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    let mut times = Vec::new();
    for (method, unfold) in variants {
        let cfg = SolverConfig::new(method, b.dt, unfold, b.t_end)?;
        let traj = integrate(sys, &b.initial, &cfg)?;
        let mae = mean_abs_error(m, &traj, &reference)?;
        let mut runs: Vec<f64> = (0..timing_runs.max(1))
            .map(|_| {
                pool.install(|| {
                    let start = Instant::now();
                    let r = run_steps(sys, &b.initial, &cfg);
                    (start.elapsed().as_secs_f64(), r)
                })
            })
            .map(|(t, r)| r.map(|_| t))
            .collect::<Result<_>>()?;
        runs.sort_by(f64::total_cmp);
        times.push(runs[runs.len() / 2]);
        rows.push(BenchRow {
            method,
            unfold,
            dt: b.dt,
            mae,
            time_relative: 0.0,
            seed: b.seed,
            sample: traj.states.iter().map(|s| s[0].clone()).collect(),
        });
    }
    let euler = times[0];
    for (row, t) in rows.iter_mut().zip(&times) {
        row.time_relative = if row.method == Method::Euler && row.unfold == 1 { 1.0 } else { t / euler };
    }
    Ok(rows)
}

/// Bare stepping loop without trajectory bookkeeping, for timing.
fn run_steps(sys: &dyn LiquidSystem, initial: &[Point], cfg: &SolverConfig) -> Result<Vec<Point>> {
    let times = cfg.report_times();
    let mut x = initial.to_vec();
    for k in 0..times.len() - 1 {
        let n = if cfg.method == Method::Gd { cfg.unfold } else { 1 };
        x = advance(sys, cfg.method, times[k], x, times[k + 1] - times[k], n)?;
    }
    Ok(x)
}

/// Decay rate `1/tau + f` bound used by [`stiff_separation`].
pub const SEPARATION_RATE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub manifold: String,
    pub dt: f64,
    /// Largest `max(d(x0, o), tau |V|)` over nodes.
    pub bound: f64,
    /// Largest ratio of distance to origin over the node's own bound, GD.
    pub gd_max_ratio: f64,
    /// Same for explicit Euler, up to the step where it first exceeds 10.
    pub euler_max_ratio: f64,
    pub euler_steps: usize,
}

impl SeparationReport {
    pub fn gd_bounded(&self) -> bool {
        self.gd_max_ratio <= 1.0 + 1e-6
    }

    pub fn euler_diverged(&self) -> bool {
        self.euler_max_ratio > 10.0
    }
}

/// GD versus explicit Euler at `dt` with decay rate up to [`SEPARATION_RATE`]
/// (`tau = 1/(rate - 1)`, gate [`stiff_schedule`], drive norm 2, 20 starts
/// within distance 2 of the origin, horizon 2).
pub fn stiff_separation(m: &ProductManifold, dt: f64, seed: u64) -> Result<SeparationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = m.origin();
    let dir = m.random_unit_tangent_coords(&o.coords, &mut rng);
    let v: Vec<f64> = m.drop_origin(&dir).iter().map(|c| 2.0 * c).collect();
    let tau = 1.0 / (SEPARATION_RATE - 1.0);
    let sys = GatedLiquid::new(
        m.clone(),
        vec![tau; m.tangent_dim()],
        v,
        GateRule::Schedule(Arc::new(stiff_schedule)),
    )?;
    let initial: Vec<Point> = (0..20).map(|_| m.random_point(&mut rng, 2.0)).collect::<Result<_>>()?;
    let vn = crate::geometry::combine(&m.factor_norms_coords(&m.lift_origin(&sys.v)), DistanceMode::L2);
    let bounds: Vec<f64> = initial
        .iter()
        .map(|x| Ok(m.distance_coords(&x.coords, &o.coords, DistanceMode::L2)?.max(tau * vn)))
        .collect::<Result<_>>()?;
    let ratio = |xs: &[Point]| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (x, b) in xs.iter().zip(&bounds) {
            let d = m.distance_coords(&x.coords, &o.coords, DistanceMode::L2)?;
            worst = worst.max(if d.is_finite() { d / b } else { f64::INFINITY });
        }
        Ok(worst)
    };
    let t_end = 2.0;
    let steps = (t_end / dt).round() as usize;

    let mut x = initial.clone();
    let mut gd_max: f64 = 1.0;
    for k in 0..steps {
        x = super::gd_step(&sys, k as f64 * dt, &x, dt).map_err(|e| e.at_step(k))?;
        gd_max = gd_max.max(ratio(&x)?);
    }

    let mut x = initial;
    let mut euler_max: f64 = 1.0;
    let mut euler_steps = 0;
    for k in 0..steps {
        x = match super::euler_step(&sys, k as f64 * dt, &x, dt) {
            Ok(next) => next,
            Err(_) => {
                euler_max = f64::INFINITY;
                break;
            }
        };
        euler_steps = k + 1;
        let r = ratio(&x).unwrap_or(f64::INFINITY);
        euler_max = euler_max.max(if r.is_nan() { f64::INFINITY } else { r });
        if euler_max > 10.0 {
            break;
        }
    }
    Ok(SeparationReport {
        manifold: m.label(),
        dt,
        bound: bounds.iter().cloned().fold(0.0, f64::max),
        gd_max_ratio: gd_max,
        euler_max_ratio: euler_max,
        euler_steps,
    })
}
