//! Liquid time-constant dynamics on product Riemannian manifolds.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: exp/log maps, parallel transport, projections and
//!   distances on products of Euclidean, spherical and hyperboloid factors.
//! - [`graph`]: snapshot data model, manifold encoders and message passing.
//! - [`dynamics`]: the liquid vector field, its gate and the system time constant.
//! - [`solvers`]: geodesic-decay splitting, Euler and geometric RK4 integrators.
//! - [`analysis`]: stability checks, trajectory length, tree/cycle embeddings and PCA.
//! - [`graphmetrics`]: Gromov delta, Betti number, clustering and temporal closure.
//! - [`report`]: CSV rendering of experiment results.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod graph;
pub mod graphmetrics;
pub mod nn;
pub mod report;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{DistanceMode, FactorKind, ManifoldSpec, Point, ProductManifold, Tangent};
