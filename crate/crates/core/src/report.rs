//! CSV rendering of experiment results. Floats use the shortest decimal
//! form that parses back to the same value.

use crate::analysis::{ExpressivityRun, Pca, Structure};
use crate::graphmetrics::MetricReport;
use crate::solvers::{BenchRow, ConvergenceReport, Trajectory};

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Comma-separated table with a header line.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    lines: Vec<String>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            lines: vec![header.join(",")],
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.lines.push(cells.join(","));
    }

    pub fn finish(self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

fn floats(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| fmt_f64(x)).collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut c = Csv::new(&["method", "unfold", "dt", "mae", "seed", "time_relative"]);
    for r in rows {
        c.row(&[
            r.method.name().to_string(),
            r.unfold.to_string(),
            fmt_f64(r.dt),
            fmt_f64(r.mae),
            r.seed.to_string(),
            fmt_f64(r.time_relative),
        ]);
    }
    c.finish()
}

/// Node 0 of every bench run, one row per sample.
pub fn bench_samples_csv(rows: &[BenchRow]) -> String {
    let dim = rows.first().and_then(|r| r.sample.first()).map_or(0, |p| p.coords.len());
    let mut header = vec!["method".to_string(), "unfold".to_string(), "t".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    let mut c = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for r in rows {
        for (k, p) in r.sample.iter().enumerate() {
            let mut cells = vec![r.method.name().to_string(), r.unfold.to_string(), fmt_f64(k as f64 * r.dt)];
            cells.extend(floats(&p.coords));
            c.row(&cells);
        }
    }
    c.finish()
}

pub fn convergence_csv(r: &ConvergenceReport) -> String {
    let mut c = Csv::new(&["method", "unfold", "dt", "error", "worst", "slope"]);
    for ((dt, e), w) in r.pairs.iter().zip(&r.worst) {
        c.row(&[
            r.method.name().to_string(),
            r.unfold.to_string(),
            fmt_f64(*dt),
            fmt_f64(*e),
            fmt_f64(*w),
            fmt_f64(r.slope),
        ]);
    }
    c.finish()
}

pub fn expressivity_csv(run: &ExpressivityRun) -> String {
    let mut c = Csv::new(&["structure", "size", "geometry", "mean_sq_norm", "traj_length", "slope"]);
    let slope = run.length_slope.map(fmt_f64).unwrap_or_default();
    for r in &run.reports {
        let structure = match r.structure {
            Structure::Tree { .. } => "tree",
            Structure::Cycle => "cycle",
        };
        c.row(&[
            structure.to_string(),
            r.size.to_string(),
            r.geometry.clone(),
            fmt_f64(r.mean_sq_norm),
            fmt_f64(r.traj_length),
            slope.clone(),
        ]);
    }
    c.finish()
}

/// One summary row per dataset.
pub fn metrics_csv(name: &str, r: &MetricReport) -> String {
    let mut c = Csv::new(&[
        "dataset",
        "delta_mean",
        "delta_variance",
        "delta_cv",
        "betti1_mean",
        "betti1_variance",
        "betti1_cv",
        "clustering_mean",
        "clustering_variance",
        "clustering_p90",
        "tcc",
    ]);
    let mut cells = vec![name.to_string()];
    cells.extend(floats(&[
        r.delta.mean,
        r.delta.variance,
        r.delta.cv,
        r.betti1.mean,
        r.betti1.variance,
        r.betti1.cv,
        r.clustering.mean,
        r.clustering.variance,
        r.clustering.p90,
    ]));
    cells.push(r.tcc.map(fmt_f64).unwrap_or_default());
    c.row(&cells);
    c.finish()
}

pub fn per_snapshot_csv(r: &MetricReport) -> String {
    let mut c = Csv::new(&["timestamp", "delta", "betti1", "clustering"]);
    for s in &r.per_snapshot {
        c.row(&[fmt_f64(s.timestamp), fmt_f64(s.delta), s.betti1.to_string(), fmt_f64(s.clustering)]);
    }
    c.finish()
}

/// Ambient coordinates of every node at every sample.
pub fn trajectory_csv(t: &Trajectory) -> String {
    let dim = t.states.first().and_then(|s| s.first()).map_or(0, |p| p.coords.len());
    let mut header = vec!["t".to_string(), "node".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    let mut c = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (time, s) in t.times.iter().zip(&t.states) {
        for (i, p) in s.iter().enumerate() {
            let mut cells = vec![fmt_f64(*time), i.to_string()];
            cells.extend(floats(&p.coords));
            c.row(&cells);
        }
    }
    c.finish()
}

pub fn pca_csv(times: &[f64], p: &Pca) -> String {
    let k = p.explained.len();
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|j| format!("pc{}", j + 1)));
    let mut c = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (t, row) in times.iter().zip(&p.projections) {
        let mut cells = vec![fmt_f64(*t)];
        cells.extend(floats(row));
        c.row(&cells);
    }
    c.finish()
}
