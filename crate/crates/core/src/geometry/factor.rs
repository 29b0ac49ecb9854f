//! Closed-form kernels for a single constant-curvature factor.
//!
//! All routines work on ambient coordinates. Sphere factors of radius `R`
//! live in `R^{n+1}` with `|p| = R`; hyperboloid factors with parameter `K`
//! live on the upper sheet `<x,x>_L = -K` of Minkowski space `R^{1,n}`
//! (sectional curvature `-1/K`); Euclidean factors are plain `R^n`.

use serde::{Deserialize, Serialize};

use super::{EPS_ANTIPODAL, EPS_MANIFOLD, LINEARIZE_BELOW, MAX_HYPERBOLIC_ARG};
use crate::error::{Error, Result};

/// Default radius for sphere factors.
pub const DEFAULT_SPHERE_SCALE: f64 = 1.0;
/// Default curvature parameter for hyperboloid factors.
pub const DEFAULT_HYPERBOLOID_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Euclidean,
    Sphere,
    Hyperboloid,
}

impl FactorKind {
    pub fn default_scale(self) -> f64 {
        match self {
            FactorKind::Euclidean => 1.0,
            FactorKind::Sphere => DEFAULT_SPHERE_SCALE,
            FactorKind::Hyperboloid => DEFAULT_HYPERBOLOID_SCALE,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            FactorKind::Euclidean => "E",
            FactorKind::Sphere => "S",
            FactorKind::Hyperboloid => "H",
        }
    }
}

/// One factor of a product manifold.
///
/// `scale` is the radius `R` for spheres and the curvature parameter `K`
/// for hyperboloids; it is ignored for Euclidean factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: FactorKind,
    pub dim: usize,
    #[serde(default = "nan_scale", skip_serializing_if = "skip_scale")]
    pub scale: f64,
}

fn nan_scale() -> f64 {
    f64::NAN
}

fn skip_scale(s: &f64) -> bool {
    s.is_nan()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn minkowski(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + dot(&a[1..], &b[1..])
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl ManifoldSpec {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            kind: FactorKind::Euclidean,
            dim,
            scale: 1.0,
        }
    }

    pub fn sphere(dim: usize, radius: f64) -> Self {
        Self {
            kind: FactorKind::Sphere,
            dim,
            scale: radius,
        }
    }

    pub fn hyperboloid(dim: usize, k: f64) -> Self {
        Self {
            kind: FactorKind::Hyperboloid,
            dim,
            scale: k,
        }
    }

    /// Fills in a missing scale and checks the invariants.
    pub fn normalized(mut self) -> Result<Self> {
        if self.scale.is_nan() {
            self.scale = self.kind.default_scale();
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("factor dimension must be positive".into()));
        }
        if self.kind != FactorKind::Euclidean && !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{:?} factor needs a positive finite scale, got {}",
                self.kind, self.scale
            )));
        }
        Ok(self)
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            FactorKind::Euclidean => self.dim,
            _ => self.dim + 1,
        }
    }

    pub fn is_curved(&self) -> bool {
        self.kind != FactorKind::Euclidean
    }

    pub fn label(&self) -> String {
        match self.kind {
            FactorKind::Euclidean => format!("E{}", self.dim),
            k => format!("{}{}({})", k.symbol(), self.dim, self.scale),
        }
    }

    pub(crate) fn origin_into(&self, out: &mut [f64]) {
        out.fill(0.0);
        match self.kind {
            FactorKind::Euclidean => {}
            FactorKind::Sphere => out[0] = self.scale,
            FactorKind::Hyperboloid => out[0] = self.scale.sqrt(),
        }
    }

    /// Riemannian inner product of two tangent vectors at the same base.
    #[inline]
    pub(crate) fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        match self.kind {
            FactorKind::Hyperboloid => minkowski(u, v),
            _ => dot(u, v),
        }
    }

    #[inline]
    pub(crate) fn norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Defect of the tangency condition, `<x, v>` in the factor pairing.
    pub(crate) fn tangency_defect(&self, x: &[f64], v: &[f64]) -> f64 {
        match self.kind {
            FactorKind::Euclidean => 0.0,
            FactorKind::Sphere => dot(x, v).abs(),
            FactorKind::Hyperboloid => minkowski(x, v).abs(),
        }
    }

    pub(crate) fn check_point(&self, factor: usize, x: &[f64]) -> Result<()> {
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::ManifoldViolation {
                factor,
                detail: "non-finite coordinate".into(),
            });
        }
        match self.kind {
            FactorKind::Euclidean => Ok(()),
            FactorKind::Sphere => {
                let r2 = self.scale * self.scale;
                let defect = (dot(x, x) - r2).abs();
                if defect > EPS_MANIFOLD * r2 {
                    Err(Error::ManifoldViolation {
                        factor,
                        detail: format!("|p|^2 - R^2 = {defect:e}"),
                    })
                } else {
                    Ok(())
                }
            }
            FactorKind::Hyperboloid => {
                let k = self.scale;
                let defect = (minkowski(x, x) + k).abs();
                // absolute for points near the origin, relative far out where
                // x0^2 carries the rounding error
                let tol = EPS_MANIFOLD * (x[0] * x[0]).max(k);
                if x[0] <= 0.0 {
                    Err(Error::ManifoldViolation {
                        factor,
                        detail: "x0 must be positive".into(),
                    })
                } else if defect > tol {
                    Err(Error::ManifoldViolation {
                        factor,
                        detail: format!("<x,x>_L + K = {defect:e}"),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Snap a nearby ambient vector back onto the factor.
    pub(crate) fn reproject(&self, x: &mut [f64]) {
        match self.kind {
            FactorKind::Euclidean => {}
            FactorKind::Sphere => {
                let n = dot(x, x).sqrt();
                if n > 0.0 {
                    let s = self.scale / n;
                    x.iter_mut().for_each(|c| *c *= s);
                } else {
                    self.origin_into(x);
                }
            }
            FactorKind::Hyperboloid => {
                let s2 = dot(&x[1..], &x[1..]);
                x[0] = (self.scale + s2).sqrt();
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x`.
    pub(crate) fn project(&self, x: &[f64], u: &mut [f64]) {
        match self.kind {
            FactorKind::Euclidean => {}
            FactorKind::Sphere => {
                let c = dot(x, u) / (self.scale * self.scale);
                axpy(-c, x, u);
            }
            FactorKind::Hyperboloid => {
                let c = minkowski(x, u) / self.scale;
                axpy(c, x, u);
            }
        }
    }

    pub(crate) fn exp(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self.kind {
            FactorKind::Euclidean => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                    *o = a + b;
                }
            }
            FactorKind::Sphere => {
                let r = self.scale;
                let n = dot(v, v).sqrt();
                if n < LINEARIZE_BELOW {
                    for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                        *o = a + b;
                    }
                } else {
                    let t = n / r;
                    let (s, c) = t.sin_cos();
                    let w = r * s / n;
                    for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                        *o = c * a + w * b;
                    }
                }
                self.reproject(out);
            }
            FactorKind::Hyperboloid => {
                let sk = self.scale.sqrt();
                let n = self.norm(v);
                if n < LINEARIZE_BELOW {
                    for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                        *o = a + b;
                    }
                } else {
                    let t = (n / sk).min(MAX_HYPERBOLIC_ARG);
                    let c = t.cosh();
                    let w = sk * t.sinh() / n;
                    for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                        *o = c * a + w * b;
                    }
                }
                self.reproject(out);
            }
        }
    }

    /// Geodesic distance together with the (unnormalized) tangent direction
    /// `u` at `x` pointing to `y`.
    fn dist_and_direction(
        &self,
        factor: usize,
        x: &[f64],
        y: &[f64],
        u: &mut [f64],
        check_antipodal: bool,
    ) -> Result<f64> {
        match self.kind {
            FactorKind::Euclidean => {
                for ((o, a), b) in u.iter_mut().zip(x).zip(y) {
                    *o = b - a;
                }
                Ok(dot(u, u).sqrt())
            }
            FactorKind::Sphere => {
                let r2 = self.scale * self.scale;
                let cos = (dot(x, y) / r2).clamp(-1.0, 1.0);
                if check_antipodal && cos <= -1.0 + EPS_ANTIPODAL {
                    return Err(Error::AntipodalPoints { factor });
                }
                u.copy_from_slice(y);
                axpy(-cos, x, u);
                self.project(x, u);
                let sin = dot(u, u).sqrt() / self.scale;
                Ok(self.scale * sin.atan2(cos))
            }
            FactorKind::Hyperboloid => {
                let k = self.scale;
                let cosh = (-minkowski(x, y) / k).max(1.0);
                u.copy_from_slice(y);
                axpy(-cosh, x, u);
                self.project(x, u);
                let theta = if cosh < 2.0 {
                    let mut q = 0.0;
                    for i in 0..x.len() {
                        let d = x[i] - y[i];
                        q += if i == 0 { -d * d } else { d * d };
                    }
                    2.0 * (q.max(0.0).sqrt() / (2.0 * k.sqrt())).asinh()
                } else {
                    cosh.acosh()
                };
                Ok(k.sqrt() * theta)
            }
        }
    }

    pub(crate) fn dist(&self, factor: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.kind {
            FactorKind::Euclidean => Ok(x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()),
            _ => {
                let mut u = vec![0.0; x.len()];
                self.dist_and_direction(factor, x, y, &mut u, false)
            }
        }
    }

    pub(crate) fn log(&self, factor: usize, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dist_and_direction(factor, x, y, out, true)?;
        if self.kind == FactorKind::Euclidean {
            return Ok(());
        }
        let n = self.norm(out);
        if n >= LINEARIZE_BELOW {
            let s = d / n;
            out.iter_mut().for_each(|c| *c *= s);
        }
        Ok(())
    }

    /// Parallel transport of `v` in `T_x` to `T_y` along the minimizing geodesic.
    pub(crate) fn transport(&self, factor: usize, x: &[f64], y: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(v);
        match self.kind {
            FactorKind::Euclidean => {}
            FactorKind::Sphere => {
                let r2 = self.scale * self.scale;
                let denom = r2 + dot(x, y);
                if denom <= EPS_ANTIPODAL * r2 {
                    return Err(Error::AntipodalPoints { factor });
                }
                let c = dot(y, v) / denom;
                axpy(-c, x, out);
                axpy(-c, y, out);
                self.project(y, out);
            }
            FactorKind::Hyperboloid => {
                let c = minkowski(y, v) / (self.scale - minkowski(x, y));
                axpy(c, x, out);
                axpy(c, y, out);
                self.project(y, out);
            }
        }
        Ok(())
    }

    /// Solves `dExp_x(v)[u] = w` for `u`, where `w` is tangent at
    /// `y = Exp_x(v)`: transport `w` back to `x`, then undo the Jacobi-field
    /// scaling of the component orthogonal to `v`.
    pub(crate) fn dexp_inverse(&self, factor: usize, x: &[f64], v: &[f64], y: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        self.transport(factor, y, x, w, out)?;
        let n = self.norm(v);
        let theta = match self.kind {
            FactorKind::Euclidean => return Ok(()),
            FactorKind::Sphere => n / self.scale,
            FactorKind::Hyperboloid => (n / self.scale.sqrt()).min(MAX_HYPERBOLIC_ARG),
        };
        if theta < 1e-8 {
            return Ok(());
        }
        let s = match self.kind {
            FactorKind::Sphere => {
                let sin = theta.sin();
                if sin <= 1e-8 {
                    return Ok(());
                }
                theta / sin
            }
            _ => theta / theta.sinh(),
        };
        let c = self.inner(out, v) / (n * n);
        for (o, vi) in out.iter_mut().zip(v) {
            let par = c * vi;
            *o = par + s * (*o - par);
        }
        self.project(x, out);
        Ok(())
    }
}
