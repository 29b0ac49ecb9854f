//! Time integrators for [`LiquidSystem`]s.
//!
//! Every stepper, RK4 and the reference solver included, evaluates the gate
//! once at the start of a (sub)step and holds it fixed for that step.

mod bench;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bench::{
    convergence_study, global_error, mean_abs_error, reference_for, smooth_benchmark, solver_bench, stiff_benchmark, stiff_separation, trajectory_error,
    stiff_schedule, BenchRow, ConvergenceReport, SeparationReport, Benchmark, SEPARATION_RATE,
};

use crate::dynamics::{system_field, LiquidSystem};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Step size used by [`Method::Reference`] and [`reference_solve`].
pub const REFERENCE_DT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Euler,
    Rk4,
    Reference,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
            Method::Reference => "reference",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Method::Gd),
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            "reference" => Ok(Method::Reference),
            _ => Err(Error::InvalidConfig(format!("unknown solver method {s:?}"))),
        }
    }
}

/// `dt` is the reported step; GD takes `unfold` substeps per reported step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub dt: f64,
    #[serde(default = "one")]
    pub unfold: usize,
    pub t_end: f64,
}

fn one() -> usize {
    1
}

impl SolverConfig {
    pub fn new(method: Method, dt: f64, unfold: usize, t_end: f64) -> Result<Self> {
        let c = Self {
            method,
            dt,
            unfold,
            t_end,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.unfold == 0 {
            return Err(Error::InvalidConfig("unfold must be at least 1".into()));
        }
        if !(self.t_end >= self.dt * (1.0 - 1e-12)) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "t_end ({}) must be at least dt ({})",
                self.t_end, self.dt
            )));
        }
        Ok(())
    }

    /// Reported times `0, dt, 2 dt, ...`, the last one clipped to `t_end`.
    pub fn report_times(&self) -> Vec<f64> {
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (0..=n).map(|k| if k == n { self.t_end } else { k as f64 * self.dt }).collect()
    }
}

/// Node states at every reported time. `step_tangents[k][i]` is
/// `Log_o(x_i(t_{k+1})) - Log_o(x_i(t_k))` in free tangent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Point>>,
    pub step_tangents: Vec<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn num_nodes(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples of a single node.
    pub fn node(&self, i: usize) -> Vec<&Point> {
        self.states.iter().map(|s| &s[i]).collect()
    }

    /// `Log_o` of node `i` at every sample, rebuilt from the step tangents.
    pub fn origin_coords(&self, m: &crate::geometry::ProductManifold, i: usize) -> Result<Vec<Vec<f64>>> {
        let mut z = m.log_origin(&self.states[0][i].coords)?;
        let mut out = vec![z.clone()];
        for st in &self.step_tangents {
            z.iter_mut().zip(&st[i]).for_each(|(a, b)| *a += b);
            out.push(z.clone());
        }
        Ok(out)
    }
}

fn check_states(sys: &dyn LiquidSystem, states: &[Point]) -> Result<()> {
    for x in states {
        sys.manifold().validate(x)?;
    }
    Ok(())
}

/// One geodesic-decay step: a driving geodesic step followed by exact
/// exponential contraction of `Log_o` toward the origin.
pub fn gd_step(sys: &dyn LiquidSystem, t: f64, states: &[Point], dt: f64) -> Result<Vec<Point>> {
    check_dt(dt)?;
    let m = sys.manifold();
    let gates = sys.gates(t, states)?;
    let o = m.origin();
    let drive = m.lift_origin(sys.drive());
    let tau = sys.tau();
    states
        .par_iter()
        .zip(&gates)
        .map(|(x, f)| {
            let pv = m.transport_coords(&o.coords, &x.coords, &drive)?;
            let wf = m.lift_weights(f);
            let mut u: Vec<f64> = pv.iter().zip(&wf).map(|(a, w)| dt * a * w).collect();
            m.project_coords(&x.coords, &mut u);
            let star = m.exp_coords(&x.coords, &u);
            let mut z = m.log_origin(&star)?;
            for ((zk, tk), fk) in z.iter_mut().zip(tau).zip(f) {
                *zk *= (-dt * (1.0 / tk + fk)).exp();
            }
            Ok(Point::new(m.exp_origin(&z)))
        })
        .collect()
}

/// `Exp_x(dt F(x))`.
pub fn euler_step(sys: &dyn LiquidSystem, t: f64, states: &[Point], dt: f64) -> Result<Vec<Point>> {
    check_dt(dt)?;
    let m = sys.manifold();
    let gates = sys.gates(t, states)?;
    let field = system_field(sys, states, &gates)?;
    Ok(states
        .par_iter()
        .zip(&field)
        .map(|(x, u)| {
            let v: Vec<f64> = u.iter().map(|c| dt * c).collect();
            Point::new(m.exp_coords(&x.coords, &v))
        })
        .collect())
}

/// How RK4 brings stage fields at `y = Exp_x(v)` back to `T_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rk4Pullback {
    /// Parallel transport along the stage geodesic.
    Transport,
    /// Inverse differential of `Exp_x` at `v`, i.e. classical RK4 in normal
    /// coordinates centred at the step start.
    #[default]
    InverseDifferential,
}

/// Geometric RK4 with the default pullback.
pub fn rk4_step(sys: &dyn LiquidSystem, t: f64, states: &[Point], dt: f64) -> Result<Vec<Point>> {
    rk4_step_with(sys, t, states, dt, Rk4Pullback::default())
}

/// Geometric RK4: stage points are reached by `Exp` from the step start and
/// stage fields are pulled back to the step start before combination.
pub fn rk4_step_with(sys: &dyn LiquidSystem, t: f64, states: &[Point], dt: f64, pullback: Rk4Pullback) -> Result<Vec<Point>> {
    check_dt(dt)?;
    let m = sys.manifold();
    let gates = sys.gates(t, states)?;
    let field_at = |xs: &[Point]| -> Result<Vec<Vec<f64>>> { system_field(sys, xs, &gates) };
    let scaled = |k: &[Vec<f64>], h: f64| -> Vec<Vec<f64>> {
        k.iter().map(|a| a.iter().map(|c| h * c).collect()).collect()
    };
    let displaced = |vs: &[Vec<f64>]| -> Vec<Point> {
        states
            .par_iter()
            .zip(vs)
            .map(|(x, v)| Point::new(m.exp_coords(&x.coords, v)))
            .collect()
    };
    let pull_back = |vs: &[Vec<f64>], ys: &[Point], fy: Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
        states
            .par_iter()
            .zip(vs)
            .zip(ys)
            .zip(fy)
            .map(|(((x, v), y), u)| match pullback {
                Rk4Pullback::Transport => m.transport_coords(&y.coords, &x.coords, &u),
                Rk4Pullback::InverseDifferential => m.dexp_inverse_coords(&x.coords, v, &y.coords, &u),
            })
            .collect()
    };
    let a1 = field_at(states)?;
    let v2 = scaled(&a1, dt / 2.0);
    let x2 = displaced(&v2);
    let a2 = pull_back(&v2, &x2, field_at(&x2)?)?;
    let v3 = scaled(&a2, dt / 2.0);
    let x3 = displaced(&v3);
    let a3 = pull_back(&v3, &x3, field_at(&x3)?)?;
    let v4 = scaled(&a3, dt);
    let x4 = displaced(&v4);
    let a4 = pull_back(&v4, &x4, field_at(&x4)?)?;
    let combined: Vec<Vec<f64>> = (0..states.len())
        .map(|i| {
            (0..a1[i].len())
                .map(|k| dt * (a1[i][k] + 2.0 * a2[i][k] + 2.0 * a3[i][k] + a4[i][k]) / 6.0)
                .collect()
        })
        .collect();
    Ok(displaced(&combined))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("step size must be nonnegative, got {dt}")));
    }
    Ok(())
}

/// Advances `states` from `t` by `h` using `substeps` equal steps of `method`.
fn advance(sys: &dyn LiquidSystem, method: Method, t: f64, states: Vec<Point>, h: f64, substeps: usize) -> Result<Vec<Point>> {
    let step = match method {
        Method::Gd => gd_step,
        Method::Euler => euler_step,
        Method::Rk4 | Method::Reference => rk4_step,
    };
    let hs = h / substeps as f64;
    let mut x = states;
    for s in 0..substeps {
        x = step(sys, t + s as f64 * hs, &x, hs)?;
    }
    Ok(x)
}

fn substeps_for(method: Method, unfold: usize, h: f64, reference_dt: f64) -> usize {
    match method {
        Method::Gd => unfold,
        Method::Reference => ((h / reference_dt) - 1e-9).ceil().max(1.0) as usize,
        _ => 1,
    }
}

/// Integrates from `initial` over `[0, cfg.t_end]`, recording every reported step.
pub fn integrate(sys: &dyn LiquidSystem, initial: &[Point], cfg: &SolverConfig) -> Result<Trajectory> {
    integrate_with(sys, initial, cfg, REFERENCE_DT)
}

/// As [`integrate`], with an explicit reference step size.
pub fn integrate_with(sys: &dyn LiquidSystem, initial: &[Point], cfg: &SolverConfig, reference_dt: f64) -> Result<Trajectory> {
    cfg.validate()?;
    if !(reference_dt > 0.0) {
        return Err(Error::InvalidConfig(format!("reference step must be positive, got {reference_dt}")));
    }
    check_states(sys, initial)?;
    let m = sys.manifold();
    let times = cfg.report_times();
    let mut states = vec![initial.to_vec()];
    let mut logs: Vec<Vec<f64>> = initial
        .iter()
        .map(|x| m.log_origin(&x.coords))
        .collect::<Result<_>>()
        .map_err(|e| e.at_step(0))?;
    let mut step_tangents = Vec::with_capacity(times.len() - 1);
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        let n = substeps_for(cfg.method, cfg.unfold, h, reference_dt);
        let next = advance(sys, cfg.method, times[k], states[k].clone(), h, n).map_err(|e| e.at_step(k))?;
        check_states(sys, &next).map_err(|e| e.at_step(k))?;
        let new_logs: Vec<Vec<f64>> = next
            .iter()
            .map(|x| m.log_origin(&x.coords))
            .collect::<Result<_>>()
            .map_err(|e| e.at_step(k))?;
        step_tangents.push(
            new_logs
                .iter()
                .zip(&logs)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
                .collect(),
        );
        logs = new_logs;
        states.push(next);
    }
    Ok(Trajectory {
        times,
        states,
        step_tangents,
    })
}

/// RK4 with [`REFERENCE_DT`] substeps, reported every `report_dt`.
pub fn reference_solve(sys: &dyn LiquidSystem, initial: &[Point], t_end: f64, report_dt: f64) -> Result<Trajectory> {
    reference_solve_with(sys, initial, t_end, report_dt, REFERENCE_DT)
}

pub fn reference_solve_with(
    sys: &dyn LiquidSystem,
    initial: &[Point],
    t_end: f64,
    report_dt: f64,
    reference_dt: f64,
) -> Result<Trajectory> {
    let cfg = SolverConfig::new(Method::Reference, report_dt, 1, t_end)?;
    integrate_with(sys, initial, &cfg, reference_dt)
}
