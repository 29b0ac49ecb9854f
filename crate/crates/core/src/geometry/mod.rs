//! Riemannian operations on products of Euclidean, spherical and
//! hyperboloid factors, in ambient coordinates.
//!
//! Every operation acts factor-wise on the concatenated coordinate vector.
//! Points returned from [`ProductManifold::exp_map`] are re-projected onto
//! the manifold so that iterated updates do not drift.

mod factor;
mod sample;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use factor::{FactorKind, ManifoldSpec, DEFAULT_HYPERBOLOID_SCALE, DEFAULT_SPHERE_SCALE};

use crate::error::{Error, Result};

/// Slack allowed in point invariants.
pub const EPS_MANIFOLD: f64 = 1e-8;
/// Round-trip tolerance used throughout the test-suite.
pub const EPS_ROUND_TRIP: f64 = 1e-9;
/// Sphere log/transport refuse points with `<p,q>/R^2 <= -1 + EPS_ANTIPODAL`.
pub const EPS_ANTIPODAL: f64 = 1e-7;
/// Tangent norms below this use the linearized exp/log.
pub const LINEARIZE_BELOW: f64 = 1e-12;
/// Largest `|v|/sqrt(K)` fed to cosh/sinh in the hyperboloid exponential.
pub const MAX_HYPERBOLIC_ARG: f64 = 40.0;

/// How factor distances are combined into a product distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceMode {
    /// Sum of factor distances.
    #[default]
    SumL1,
    /// Square root of the sum of squared factor distances.
    L2,
}

/// A point in ambient coordinates, all factor blocks concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

/// A tangent vector together with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub base: Point,
    pub coords: Vec<f64>,
}

impl Tangent {
    pub fn new(base: Point, coords: Vec<f64>) -> Self {
        Self { base, coords }
    }

    pub fn zero(base: Point) -> Self {
        let n = base.coords.len();
        Self {
            base,
            coords: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifoldConfig {
    factors: Vec<ManifoldSpec>,
}

/// Cartesian product of constant-curvature factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifoldConfig", into = "ManifoldConfig")]
pub struct ProductManifold {
    factors: Vec<ManifoldSpec>,
    offsets: Vec<usize>,
    tangent_offsets: Vec<usize>,
    ambient_dim: usize,
    tangent_dim: usize,
}

impl TryFrom<ManifoldConfig> for ProductManifold {
    type Error = Error;

    fn try_from(c: ManifoldConfig) -> Result<Self> {
        ProductManifold::new(c.factors)
    }
}

impl From<ProductManifold> for ManifoldConfig {
    fn from(m: ProductManifold) -> Self {
        ManifoldConfig { factors: m.factors }
    }
}

/// Compact form: comma-separated factors `<kind><dim>[@<scale>]` with kind
/// `e`, `s` or `h`, e.g. `h2@1,s2@0.5,e3`.
impl std::str::FromStr for ProductManifold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |f: &str| Error::InvalidConfig(format!("bad manifold factor {f:?}, expected e.g. h2@1, s2 or e3"));
        let factors = s
            .split(',')
            .map(|f| {
                let f = f.trim();
                let (head, scale) = match f.split_once('@') {
                    Some((h, sc)) => (h, sc.parse::<f64>().map_err(|_| bad(f))?),
                    None => (f, f64::NAN),
                };
                let mut chars = head.chars();
                let kind = match chars.next().map(|c| c.to_ascii_lowercase()) {
                    Some('e') => FactorKind::Euclidean,
                    Some('s') => FactorKind::Sphere,
                    Some('h') => FactorKind::Hyperboloid,
                    _ => return Err(bad(f)),
                };
                let dim = chars.as_str().parse::<usize>().map_err(|_| bad(f))?;
                Ok(ManifoldSpec { kind, dim, scale })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }
}

impl ProductManifold {
    pub fn new(factors: Vec<ManifoldSpec>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidConfig("product manifold needs at least one factor".into()));
        }
        let factors = factors
            .into_iter()
            .map(ManifoldSpec::normalized)
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(factors.len());
        let mut tangent_offsets = Vec::with_capacity(factors.len());
        let (mut a, mut t) = (0, 0);
        for f in &factors {
            offsets.push(a);
            tangent_offsets.push(t);
            a += f.ambient_dim();
            t += f.dim;
        }
        Ok(Self {
            factors,
            offsets,
            tangent_offsets,
            ambient_dim: a,
            tangent_dim: t,
        })
    }

    pub fn single(spec: ManifoldSpec) -> Result<Self> {
        Self::new(vec![spec])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifold serializes")
    }

    pub fn factors(&self) -> &[ManifoldSpec] {
        &self.factors
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Intrinsic dimension, i.e. the number of free tangent coordinates at the origin.
    pub fn tangent_dim(&self) -> usize {
        self.tangent_dim
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factor_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.factors[i].ambient_dim()
    }

    /// Slice of the origin tangent coordinates belonging to factor `i`.
    pub fn tangent_range(&self, i: usize) -> Range<usize> {
        self.tangent_offsets[i]..self.tangent_offsets[i] + self.factors[i].dim
    }

    pub fn is_euclidean(&self) -> bool {
        self.factors.iter().all(|f| !f.is_curved())
    }

    pub fn label(&self) -> String {
        self.factors
            .iter()
            .map(ManifoldSpec::label)
            .collect::<Vec<_>>()
            .join("x")
    }

    fn check_len(&self, context: &'static str, got: usize) -> Result<()> {
        if got != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.ambient_dim,
                got,
            });
        }
        Ok(())
    }

    fn check_base(&self, x: &Point, v: &Tangent) -> Result<()> {
        if v.base.coords.len() != x.coords.len()
            || v
                .base
                .coords
                .iter()
                .zip(&x.coords)
                .any(|(a, b)| (a - b).abs() > EPS_ROUND_TRIP * (1.0 + b.abs()))
        {
            return Err(Error::InvalidBasePoint);
        }
        Ok(())
    }

    pub fn origin(&self) -> Point {
        let mut c = vec![0.0; self.ambient_dim];
        self.origin_into(&mut c);
        Point::new(c)
    }

    pub(crate) fn origin_into(&self, out: &mut [f64]) {
        for (i, f) in self.factors.iter().enumerate() {
            f.origin_into(&mut out[self.factor_range(i)]);
        }
    }

    /// Checks the point invariants of every factor block.
    pub fn validate(&self, x: &Point) -> Result<()> {
        self.validate_coords(&x.coords)
    }

    pub fn validate_coords(&self, x: &[f64]) -> Result<()> {
        self.check_len("point", x.len())?;
        for (i, f) in self.factors.iter().enumerate() {
            f.check_point(i, &x[self.factor_range(i)])?;
        }
        Ok(())
    }

    /// Checks that `v` is tangent at its base point.
    pub fn validate_tangent(&self, v: &Tangent) -> Result<()> {
        self.validate(&v.base)?;
        self.check_len("tangent", v.coords.len())?;
        for (i, f) in self.factors.iter().enumerate() {
            let r = self.factor_range(i);
            let (x, u) = (&v.base.coords[r.clone()], &v.coords[r]);
            let scale = factor::dot(x, x).sqrt() * factor::dot(u, u).sqrt();
            if f.tangency_defect(x, u) > EPS_MANIFOLD * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::ManifoldViolation {
                    factor: i,
                    detail: "vector is not tangent at its base point".into(),
                });
            }
        }
        Ok(())
    }

    /// Re-projects every curved block onto its factor.
    pub fn reproject(&self, x: &mut [f64]) {
        for (i, f) in self.factors.iter().enumerate() {
            f.reproject(&mut x[self.factor_range(i)]);
        }
    }

    pub fn exp_map(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_base(x, v)?;
        self.validate(x)?;
        self.check_len("tangent", v.coords.len())?;
        Ok(Point::new(self.exp_coords(&x.coords, &v.coords)))
    }

    pub fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.validate(x)?;
        self.validate(y)?;
        Ok(Tangent::new(x.clone(), self.log_coords(&x.coords, &y.coords)?))
    }

    pub fn parallel_transport(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        self.check_base(x, v)?;
        self.validate(x)?;
        self.validate(y)?;
        self.check_len("tangent", v.coords.len())?;
        Ok(Tangent::new(
            y.clone(),
            self.transport_coords(&x.coords, &y.coords, &v.coords)?,
        ))
    }

    pub fn project_tangent(&self, x: &Point, u: &[f64]) -> Result<Tangent> {
        self.validate(x)?;
        self.check_len("ambient vector", u.len())?;
        let mut out = u.to_vec();
        self.project_coords(&x.coords, &mut out);
        Ok(Tangent::new(x.clone(), out))
    }

    pub fn distance(&self, x: &Point, y: &Point, mode: DistanceMode) -> Result<f64> {
        self.validate(x)?;
        self.validate(y)?;
        self.distance_coords(&x.coords, &y.coords, mode)
    }

    /// Per-factor geodesic distances.
    pub fn factor_distances(&self, x: &Point, y: &Point) -> Result<Vec<f64>> {
        self.validate(x)?;
        self.validate(y)?;
        self.factor_distances_coords(&x.coords, &y.coords)
    }

    /// Riemannian norm of a tangent vector, factor norms combined in L2.
    pub fn tangent_norm(&self, v: &Tangent) -> f64 {
        combine(&self.factor_norms_coords(&v.coords), DistanceMode::L2)
    }

    pub fn factor_norms(&self, v: &Tangent) -> Vec<f64> {
        self.factor_norms_coords(&v.coords)
    }

    /// Riemannian inner product of two tangents at the same base point.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.factors.len())
            .map(|i| {
                let r = self.factor_range(i);
                self.factors[i].inner(&u[r.clone()], &v[r])
            })
            .sum()
    }

    /// Per-factor inner products.
    pub fn factor_inners(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        (0..self.factors.len())
            .map(|i| {
                let r = self.factor_range(i);
                self.factors[i].inner(&u[r.clone()], &v[r])
            })
            .collect()
    }

    // ---- unchecked coordinate-level kernels -------------------------------

    pub fn exp_coords(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim];
        for (i, f) in self.factors.iter().enumerate() {
            let r = self.factor_range(i);
            f.exp(&x[r.clone()], &v[r.clone()], &mut out[r]);
        }
        out
    }

    pub fn log_coords(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.ambient_dim];
        for (i, f) in self.factors.iter().enumerate() {
            let r = self.factor_range(i);
            f.log(i, &x[r.clone()], &y[r.clone()], &mut out[r])?;
        }
        Ok(out)
    }

    pub fn transport_coords(&self, x: &[f64], y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.ambient_dim];
        for (i, f) in self.factors.iter().enumerate() {
            let r = self.factor_range(i);
            f.transport(i, &x[r.clone()], &y[r.clone()], &v[r.clone()], &mut out[r])?;
        }
        Ok(out)
    }

    /// Inverse of the differential of `Exp_x` at `v`, applied to `w` in `T_y`
    /// with `y = Exp_x(v)`.
    pub fn dexp_inverse_coords(&self, x: &[f64], v: &[f64], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.ambient_dim];
        for (i, f) in self.factors.iter().enumerate() {
            let r = self.factor_range(i);
            f.dexp_inverse(i, &x[r.clone()], &v[r.clone()], &y[r.clone()], &w[r.clone()], &mut out[r])?;
        }
        Ok(out)
    }

    pub fn project_coords(&self, x: &[f64], u: &mut [f64]) {
        for (i, f) in self.factors.iter().enumerate() {
            let r = self.factor_range(i);
            f.project(&x[r.clone()], &mut u[r]);
        }
    }

    pub fn factor_distances_coords(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let r = self.factor_range(i);
                f.dist(i, &x[r.clone()], &y[r])
            })
            .collect()
    }

    pub fn distance_coords(&self, x: &[f64], y: &[f64], mode: DistanceMode) -> Result<f64> {
        Ok(combine(&self.factor_distances_coords(x, y)?, mode))
    }

    pub fn factor_norms_coords(&self, v: &[f64]) -> Vec<f64> {
        (0..self.factors.len())
            .map(|i| self.factors[i].norm(&v[self.factor_range(i)]))
            .collect()
    }

    // ---- origin tangent coordinates ---------------------------------------

    /// Places free tangent coordinates at the origin into ambient
    /// coordinates; the leading coordinate of each curved block is zero.
    pub fn lift_origin(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.tangent_dim);
        let mut out = vec![0.0; self.ambient_dim];
        for (i, f) in self.factors.iter().enumerate() {
            let src = &z[self.tangent_range(i)];
            let dst = &mut out[self.factor_range(i)];
            let skip = usize::from(f.is_curved());
            dst[skip..].copy_from_slice(src);
        }
        out
    }

    /// Inverse of [`lift_origin`](Self::lift_origin): drops the leading
    /// coordinate of each curved block.
    pub fn drop_origin(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.tangent_dim];
        for (i, f) in self.factors.iter().enumerate() {
            let skip = usize::from(f.is_curved());
            let src = &v[self.factor_range(i)];
            out[self.tangent_range(i)].copy_from_slice(&src[skip..]);
        }
        out
    }

    /// Per-coordinate weights given on the tangent coordinates, expanded to
    /// ambient coordinates. The leading slot of a curved block takes the mean
    /// of the block, so a constant block acts as plain scalar multiplication.
    pub fn lift_weights(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim];
        for (i, f) in self.factors.iter().enumerate() {
            let src = &w[self.tangent_range(i)];
            let dst = &mut out[self.factor_range(i)];
            if f.is_curved() {
                dst[0] = src.iter().sum::<f64>() / src.len() as f64;
                dst[1..].copy_from_slice(src);
            } else {
                dst.copy_from_slice(src);
            }
        }
        out
    }

    /// `Log_o(x)` in free tangent coordinates.
    pub fn log_origin(&self, x: &[f64]) -> Result<Vec<f64>> {
        let o = self.origin();
        Ok(self.drop_origin(&self.log_coords(&o.coords, x)?))
    }

    /// `Exp_o` of free tangent coordinates.
    pub fn exp_origin(&self, z: &[f64]) -> Vec<f64> {
        let o = self.origin();
        self.exp_coords(&o.coords, &self.lift_origin(z))
    }
}

/// Combines factor distances (or norms) according to `mode`.
pub fn combine(parts: &[f64], mode: DistanceMode) -> f64 {
    match mode {
        DistanceMode::SumL1 => parts.iter().sum(),
        DistanceMode::L2 => parts.iter().map(|d| d * d).sum::<f64>().sqrt(),
    }
}
