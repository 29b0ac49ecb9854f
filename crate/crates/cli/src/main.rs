//! Experiment runner: each subcommand delegates to the library and writes
//! CSV/JSON artifacts into the output directory.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geoliquid::analysis::{
    benchmark_invariant_ball, check_tau_bounds, expressivity_experiment, pca_trajectory, sample_gate_outputs,
    EmbeddingGeometry, ExpressivityConfig, Structure,
};
use geoliquid::dynamics::{GraphLiquid, LiquidParams};
use geoliquid::graph::{load_graph, parse_edge_list, GraphFormat, GraphSnapshot};
use geoliquid::graphmetrics::{metric_report, DeltaMode};
use geoliquid::nn::Matrix;
use geoliquid::report;
use geoliquid::solvers::{
    convergence_study, integrate, smooth_benchmark, solver_bench, stiff_benchmark, stiff_separation, Method,
    SolverConfig,
};
use geoliquid::{Error, ProductManifold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use config::{pick, FileConfig};

const C6: &str = include_str!("../../../fixtures/c6.csv");
const TEMPORAL5: &str = include_str!("../../../fixtures/temporal5.csv");
const PETERSEN: &str = include_str!("../../../fixtures/petersen.csv");

#[derive(Parser)]
#[command(name = "geoliquid", version, about = "Liquid dynamics on product manifolds: experiments and metrics")]
struct Cli {
    /// JSON config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Euler, RK4 and GD (unfold 1 and 4) on the stiff sphere benchmark.
    SolverBench {
        #[arg(long)]
        dt: Option<f64>,
        /// Number of trajectories.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        timing_runs: Option<usize>,
        #[arg(long)]
        reference_dt: Option<f64>,
    },
    /// Global error against step size and the fitted order.
    Converge {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        unfold: Option<usize>,
        /// `stiff` or `smooth`.
        #[arg(long)]
        problem: Option<String>,
        /// Comma-separated step sizes.
        #[arg(long)]
        dts: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        reference_dt: Option<f64>,
    },
    /// Time-constant bounds, invariant ball and stiff separation.
    Stability {
        /// Gate samples for the time-constant check.
        #[arg(long)]
        samples: Option<usize>,
        /// Reference trajectories for the invariant-ball check.
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        reference_dt: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Manifold for gate sampling, e.g. `h2@1,s2@1`.
        #[arg(long)]
        manifold: Option<String>,
    },
    /// Trajectory length from tree or cycle embeddings of growing size.
    Expressivity {
        /// `tree` or `cycle`.
        #[arg(long)]
        structure: Option<String>,
        /// `euclidean`, `hyperbolic` or `spherical`.
        #[arg(long)]
        geometry: Option<String>,
        /// Comma-separated depths (trees) or node counts (cycles).
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        branching: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        unfold: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Gromov delta, Betti number, clustering and temporal closure.
    Metrics {
        /// Graph file or manifest.
        #[arg(long, conflicts_with = "fixture")]
        graph: Option<PathBuf>,
        /// Bundled graph: `c6`, `temporal5` or `petersen`.
        #[arg(long)]
        fixture: Option<String>,
        /// `manifest` or `edgelist`.
        #[arg(long)]
        format: Option<String>,
        /// `exact` or `sampled:<n>`.
        #[arg(long)]
        mode: Option<String>,
        /// Closure window in snapshots.
        #[arg(long)]
        delta_t: Option<usize>,
    },
    /// Integrates a randomly parameterized graph liquid.
    Simulate {
        /// Product manifold, e.g. `h2@1,s2@1`.
        #[arg(long)]
        manifold: Option<String>,
        /// Graph file; a random graph is generated if absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
        /// Node count of the random graph.
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        unfold: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        pca_components: Option<usize>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_)
            | Error::SizeLimit(_)
            | Error::InsufficientPoints { .. }
            | Error::TooFewSamples { .. }
            | Error::TooFewSnapshots { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptySeries => 2,
            Error::Io { .. } | Error::ParseError { .. } | Error::ValidationError(_) | Error::DisconnectedGraph => 4,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 2, message }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = pick(cli.seed, file.seed, 42);
    let out = pick(cli.out.clone(), file.out.clone(), PathBuf::from("out"));
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    let ctx = Ctx { file, seed, out };
    match cli.command {
        Command::SolverBench {
            dt,
            count,
            timing_runs,
            reference_dt,
        } => ctx.solver_bench(dt, count, timing_runs, reference_dt),
        Command::Converge {
            method,
            unfold,
            problem,
            dts,
            count,
            reference_dt,
        } => ctx.converge(method, unfold, problem, dts, count, reference_dt),
        Command::Stability {
            samples,
            trajectories,
            reference_dt,
            dt,
            manifold,
        } => ctx.stability(samples, trajectories, reference_dt, dt, manifold),
        Command::Expressivity {
            structure,
            geometry,
            sizes,
            branching,
            eps,
            seeds,
            dt,
            unfold,
            t_end,
        } => ctx.expressivity(structure, geometry, sizes, branching, eps, seeds, dt, unfold, t_end),
        Command::Metrics {
            graph,
            fixture,
            format,
            mode,
            delta_t,
        } => ctx.metrics(graph, fixture, format, mode, delta_t),
        Command::Simulate {
            manifold,
            graph,
            format,
            nodes,
            method,
            dt,
            unfold,
            t_end,
            pca_components,
        } => ctx.simulate(manifold, graph, format, nodes, method, dt, unfold, t_end, pca_components),
    }
}

struct Ctx {
    file: FileConfig,
    seed: u64,
    out: PathBuf,
}

fn positive(flag: &str, x: f64) -> Outcome {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--{flag} must be positive and finite, got {x}")))
    }
}

fn at_least(flag: &str, x: usize, min: usize) -> Outcome {
    if x >= min {
        Ok(())
    } else {
        Err(usage(format!("--{flag} must be at least {min}, got {x}")))
    }
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> std::result::Result<Vec<T>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| usage(format!("--{flag}: cannot parse {x:?}"))))
        .collect()
}

fn parse_method(s: &str) -> std::result::Result<Method, Failure> {
    s.parse().map_err(|e: Error| usage(format!("--method: {e}")))
}

fn parse_manifold(s: &str) -> std::result::Result<ProductManifold, Failure> {
    s.parse().map_err(|e: Error| usage(format!("--manifold: {e}")))
}

fn parse_format(s: &str) -> std::result::Result<GraphFormat, Failure> {
    match s {
        "manifest" => Ok(GraphFormat::Manifest),
        "edgelist" => Ok(GraphFormat::EdgeList),
        _ => Err(usage(format!("--format must be manifest or edgelist, got {s:?}"))),
    }
}

fn parse_mode(s: &str, seed: u64) -> std::result::Result<DeltaMode, Failure> {
    if s == "exact" {
        return Ok(DeltaMode::Exact);
    }
    match s.strip_prefix("sampled:").map(str::parse::<usize>) {
        Some(Ok(count)) if count > 0 => Ok(DeltaMode::Sampled { count, seed }),
        _ => Err(usage(format!("--mode must be exact or sampled:<n> with n > 0, got {s:?}"))),
    }
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Outcome {
        fs::create_dir_all(&self.out).map_err(|e| io_failure(&self.out, e))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Outcome {
        let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
        s.push('\n');
        self.write(name, &s)
    }

    fn solver_bench(&self, dt: Option<f64>, count: Option<usize>, timing_runs: Option<usize>, reference_dt: Option<f64>) -> Outcome {
        let f = &self.file;
        let dt = pick(dt, f.dt, 0.05);
        let count = pick(count, f.count, 100);
        let timing_runs = pick(timing_runs, f.timing_runs, 5);
        let reference_dt = pick(reference_dt, f.reference_dt, 1e-4);
        positive("dt", dt)?;
        positive("reference-dt", reference_dt)?;
        at_least("count", count, 1)?;
        at_least("timing-runs", timing_runs, 1)?;
        let mut b = stiff_benchmark(self.seed, count);
        b.dt = dt;
        SolverConfig::new(Method::Gd, dt, 4, b.t_end)?;
        let rows = solver_bench(&b, timing_runs, reference_dt)?;
        self.write("solver_bench.csv", &report::bench_csv(&rows))?;
        self.write("solver_bench_samples.csv", &report::bench_samples_csv(&rows))
    }

    fn converge(
        &self,
        method: Option<String>,
        unfold: Option<usize>,
        problem: Option<String>,
        dts: Option<String>,
        count: Option<usize>,
        reference_dt: Option<f64>,
    ) -> Outcome {
        let f = &self.file;
        let method = parse_method(&pick(method, f.method.clone(), "gd".into()))?;
        let unfold = pick(unfold, f.unfold, 1);
        let problem = pick(problem, f.problem.clone(), "stiff".into());
        let dts: Vec<f64> = match dts {
            Some(s) => parse_list("dts", &s)?,
            None => f.dts.clone().unwrap_or_else(|| vec![0.1, 0.05, 0.025, 0.0125]),
        };
        let count = pick(count, f.count, 10);
        let reference_dt = pick(reference_dt, f.reference_dt, 1e-4);
        at_least("unfold", unfold, 1)?;
        at_least("count", count, 1)?;
        positive("reference-dt", reference_dt)?;
        if dts.len() < 3 {
            return Err(usage(format!("--dts needs at least 3 step sizes, got {}", dts.len())));
        }
        for &dt in &dts {
            positive("dts", dt)?;
        }
        let b = match problem.as_str() {
            "stiff" => stiff_benchmark(self.seed, count),
            "smooth" => smooth_benchmark(self.seed, count),
            _ => return Err(usage(format!("--problem must be stiff or smooth, got {problem:?}"))),
        };
        let r = convergence_study(&b.system, &b.initial, b.t_end, method, unfold, &dts, reference_dt)?;
        self.write("convergence.csv", &report::convergence_csv(&r))
    }

    fn stability(
        &self,
        samples: Option<usize>,
        trajectories: Option<usize>,
        reference_dt: Option<f64>,
        dt: Option<f64>,
        manifold: Option<String>,
    ) -> Outcome {
        let f = &self.file;
        let samples = pick(samples, f.samples, 10_000);
        let trajectories = pick(trajectories, f.trajectories, 100);
        let reference_dt = pick(reference_dt, f.reference_dt, 1e-4);
        let dt = pick(dt, f.dt, 0.1);
        let m = parse_manifold(&pick(manifold, f.manifold.clone(), "h2@1,s2@1".into()))?;
        at_least("samples", samples, 1)?;
        at_least("trajectories", trajectories, 1)?;
        positive("reference-dt", reference_dt)?;
        positive("dt", dt)?;
        let tau = check_tau_bounds(&sample_gate_outputs(&m, samples, self.seed)?)?;
        let ball = benchmark_invariant_ball(self.seed, trajectories, reference_dt)?;
        let mut separation = Vec::new();
        for spec in ["e2", "h2@1"] {
            let sm: ProductManifold = spec.parse()?;
            separation.push(stiff_separation(&sm, dt, self.seed)?);
        }
        let passed =
            tau.violations == 0 && ball.passed() && separation.iter().all(|s| s.gd_bounded() && s.euler_diverged());
        self.write_json(
            "stability.json",
            &json!({
                "passed": passed,
                "tau_bounds": tau,
                "invariant_ball": ball,
                "separation": separation,
            }),
        )?;
        if passed {
            Ok(())
        } else {
            Err(Failure {
                code: 3,
                message: "stability checks failed; see stability.json".into(),
            })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn expressivity(
        &self,
        structure: Option<String>,
        geometry: Option<String>,
        sizes: Option<String>,
        branching: Option<usize>,
        eps: Option<f64>,
        seeds: Option<usize>,
        dt: Option<f64>,
        unfold: Option<usize>,
        t_end: Option<f64>,
    ) -> Outcome {
        let f = &self.file;
        let structure = pick(structure, f.structure.clone(), "tree".into());
        let geometry = pick(geometry, f.geometry.clone(), "hyperbolic".into());
        let sizes: Vec<usize> = match sizes {
            Some(s) => parse_list("sizes", &s)?,
            None => f.sizes.clone().unwrap_or_else(|| (2..=8).collect()),
        };
        let branching = pick(branching, f.branching, 2);
        let eps = pick(eps, f.eps, 0.1);
        let defaults = ExpressivityConfig::default();
        let cfg = ExpressivityConfig {
            seeds: pick(seeds, f.seeds, defaults.seeds),
            dt: pick(dt, f.dt, defaults.dt),
            unfold: pick(unfold, f.unfold, defaults.unfold),
            t_end: pick(t_end, f.t_end, defaults.t_end),
            seed: self.seed,
            ..defaults
        };
        let structure = match structure.as_str() {
            "tree" => Structure::Tree { branching },
            "cycle" => Structure::Cycle,
            _ => return Err(usage(format!("--structure must be tree or cycle, got {structure:?}"))),
        };
        let geometry = match geometry.as_str() {
            "euclidean" => EmbeddingGeometry::Euclidean,
            "hyperbolic" => EmbeddingGeometry::Hyperbolic { eps },
            "spherical" => EmbeddingGeometry::Spherical,
            _ => {
                return Err(usage(format!(
                    "--geometry must be euclidean, hyperbolic or spherical, got {geometry:?}"
                )))
            }
        };
        if sizes.is_empty() {
            return Err(usage("--sizes is empty".into()));
        }
        cfg.validate()?;
        let run = expressivity_experiment(structure, geometry, &sizes, &cfg)?;
        self.write("expressivity.csv", &report::expressivity_csv(&run))?;
        self.write_json("expressivity.json", &serde_json::to_value(&run).expect("report serializes"))
    }

    fn metrics(
        &self,
        graph: Option<PathBuf>,
        fixture: Option<String>,
        format: Option<String>,
        mode: Option<String>,
        delta_t: Option<usize>,
    ) -> Outcome {
        let f = &self.file;
        let mode = parse_mode(&pick(mode, f.mode.clone(), "exact".into()), self.seed)?;
        let delta_t = delta_t
            .or(f.delta_t)
            .ok_or_else(|| usage("--delta-t is required".into()))?;
        at_least("delta-t", delta_t, 1)?;
        let format = parse_format(&pick(format, f.format.clone(), "edgelist".into()))?;
        let graph = graph.or_else(|| f.graph.clone());
        let fixture = fixture.or_else(|| f.fixture.clone());
        let (name, snapshots) = match (graph, fixture) {
            (Some(p), None) => {
                let name = p.file_stem().map_or("graph".into(), |s| s.to_string_lossy().into_owned());
                (name, load_graph(&p, format)?)
            }
            (None, Some(fx)) => {
                let text = match fx.as_str() {
                    "c6" => C6,
                    "temporal5" => TEMPORAL5,
                    "petersen" => PETERSEN,
                    _ => return Err(usage(format!("--fixture must be c6, temporal5 or petersen, got {fx:?}"))),
                };
                (fx, parse_edge_list(text)?)
            }
            (Some(_), Some(_)) => return Err(usage("--graph and --fixture are mutually exclusive".into())),
            (None, None) => return Err(usage("one of --graph or --fixture is required".into())),
        };
        let r = metric_report(&snapshots, mode, delta_t)?;
        self.write("metrics.csv", &report::metrics_csv(&name, &r))?;
        self.write("per_snapshot.csv", &report::per_snapshot_csv(&r))?;
        self.write_json(
            "metrics.json",
            &json!({"dataset": name, "delta_t": delta_t, "report": r}),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        manifold: Option<String>,
        graph: Option<PathBuf>,
        format: Option<String>,
        nodes: Option<usize>,
        method: Option<String>,
        dt: Option<f64>,
        unfold: Option<usize>,
        t_end: Option<f64>,
        pca_components: Option<usize>,
    ) -> Outcome {
        let f = &self.file;
        let m = parse_manifold(&pick(manifold, f.manifold.clone(), "h2@1,s2@1".into()))?;
        let format = parse_format(&pick(format, f.format.clone(), "edgelist".into()))?;
        let nodes = pick(nodes, f.nodes, 20);
        let method = parse_method(&pick(method, f.method.clone(), "gd".into()))?;
        let solver = SolverConfig::new(
            method,
            pick(dt, f.dt, 0.05),
            pick(unfold, f.unfold, 1),
            pick(t_end, f.t_end, 2.0),
        )?;
        let k = pick(pca_components, f.pca_components, 3);
        at_least("nodes", nodes, 1)?;
        at_least("pca-components", k, 1)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut snapshots = match graph.or_else(|| f.graph.clone()) {
            Some(p) => load_graph(&p, format)?,
            None => {
                let edges = (0..3 * nodes)
                    .map(|_| (rng.random_range(0..nodes), rng.random_range(0..nodes)))
                    .collect();
                vec![GraphSnapshot::from_edges(nodes, edges, 0.0).symmetrized()]
            }
        };
        let node_dim = 3;
        for s in &mut snapshots {
            if s.node_feature_dim() == 0 {
                s.node_features = Matrix::uniform_fan_in(s.num_nodes, node_dim, &mut rng);
            }
        }
        let node_dim = snapshots[0].node_feature_dim();
        let edge_dim = snapshots[0].edge_feature_dim();
        let params = LiquidParams::random(&m, node_dim, edge_dim, &[16], 1.0, &mut rng);
        let sys = GraphLiquid::new(params, m.clone(), snapshots)?;
        let traj = integrate(&sys, &sys.initial_states()?, &solver)?;
        let pca = pca_trajectory(&traj, &m, k.min(traj.len().saturating_sub(1)).max(1))?;
        self.write("trajectory.csv", &report::trajectory_csv(&traj))?;
        self.write_json(
            "params.json",
            &json!({
                "seed": self.seed,
                "manifold": m,
                "solver": solver,
                "params": sys.params(),
            }),
        )?;
        self.write("pca.csv", &report::pca_csv(&traj.times, &pca))
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 4,
        message: format!("{}: {e}", path.display()),
    }
}
