//! JSON config file. Every key is optional and mirrors a flag name with
//! dashes replaced by underscores.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dt: Option<f64>,
    pub count: Option<usize>,
    pub timing_runs: Option<usize>,
    pub reference_dt: Option<f64>,
    pub method: Option<String>,
    pub unfold: Option<usize>,
    pub problem: Option<String>,
    pub dts: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub trajectories: Option<usize>,
    pub manifold: Option<String>,
    pub structure: Option<String>,
    pub geometry: Option<String>,
    pub sizes: Option<Vec<usize>>,
    pub branching: Option<usize>,
    pub eps: Option<f64>,
    pub seeds: Option<usize>,
    pub t_end: Option<f64>,
    pub mode: Option<String>,
    pub delta_t: Option<usize>,
    pub format: Option<String>,
    pub graph: Option<PathBuf>,
    pub fixture: Option<String>,
    pub nodes: Option<usize>,
    pub pca_components: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure {
            code: 4,
            message: format!("{}: {e}", path.display()),
        })?;
        serde_json::from_str(&text).map_err(|e| Failure {
            code: 2,
            message: format!("--config {}: {e}", path.display()),
        })
    }
}

/// Flag, then file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
