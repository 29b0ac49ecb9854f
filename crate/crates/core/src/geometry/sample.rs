use rand::Rng;
use rand_distr::StandardNormal;

use super::{Point, ProductManifold, Tangent};
use crate::error::{Error, Result};

impl ProductManifold {
    /// Random tangent vector at `x` with uniformly distributed direction and
    /// norm drawn uniformly from `[0, norm_bound]`.
    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R, norm_bound: f64) -> Result<Tangent> {
        if !(norm_bound > 0.0) {
            return Err(Error::DomainError(format!("norm bound must be positive, got {norm_bound}")));
        }
        self.validate(x)?;
        let mut v = self.random_unit_tangent_coords(&x.coords, rng);
        let r = norm_bound * rng.random::<f64>();
        v.iter_mut().for_each(|c| *c *= r);
        Ok(Tangent::new(x.clone(), v))
    }

    /// Unit-norm tangent at `x` (uniform over directions at the origin).
    pub fn random_unit_tangent_coords<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        loop {
            let mut v: Vec<f64> = (0..self.ambient_dim()).map(|_| rng.sample(StandardNormal)).collect();
            self.project_coords(x, &mut v);
            let n = self.inner(&v, &v).max(0.0).sqrt();
            if n > 1e-8 {
                v.iter_mut().for_each(|c| *c /= n);
                return v;
            }
        }
    }

    /// Random point within geodesic (L2) distance `radius_bound` of the origin,
    /// produced as `Exp_o` of a random tangent at the origin.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R, radius_bound: f64) -> Result<Point> {
        let o = self.origin();
        let v = self.random_tangent(&o, rng, radius_bound)?;
        Ok(Point::new(self.exp_coords(&o.coords, &v.coords)))
    }
}
