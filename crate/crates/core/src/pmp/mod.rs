//! Pontryagin machinery for second-order control problems `Dq'/Dt = u` on
//! flat space and on SO(3) with its bi-invariant metric.
//!
//! Tangent vectors are plain `DVector`s: Euclidean coordinates on flat space,
//! body (left-trivialized) coordinates on SO(3). In body coordinates the
//! Levi-Civita derivative of a field `Y` along a curve with body velocity `ω`
//! is `DY/Dt = Ẏ + ½ω×Y`, and the curvature is `R(X,Y)Z = -¼(X×Y)×Z`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::so3::{dexp_inv_truncated, exp_so3, log_so3, Rotation};

mod costate;
mod integrate;
mod shooting;
mod transcription;
mod variational;

pub use costate::{costate_integrate, terminal_costate, CostateTrajectory};
pub use integrate::integrate_controlled;
pub use shooting::{avoidance_rhs, regulation_rhs, shooting_solve, ShootingOptions};
pub use transcription::{discrete_cost, sample_controls, transcription_oracle, OracleOptions};
pub use variational::variational_propagate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManifoldTag {
    Flat,
    So3,
}

impl ManifoldTag {
    pub fn name(&self) -> &'static str {
        match self {
            ManifoldTag::Flat => "flat",
            ManifoldTag::So3 => "so3",
        }
    }
}

/// Configuration point.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Flat(DVector<f64>),
    So3(Rotation),
}

fn v3(x: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

fn dv(x: Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

impl Point {
    pub fn tag(&self) -> ManifoldTag {
        match self {
            Point::Flat(_) => ManifoldTag::Flat,
            Point::So3(_) => ManifoldTag::So3,
        }
    }

    /// Tangent dimension.
    pub fn dim(&self) -> usize {
        match self {
            Point::Flat(q) => q.len(),
            Point::So3(_) => 3,
        }
    }

    /// `q + θ` or `R·exp(θ)`.
    pub fn displace(&self, theta: &DVector<f64>) -> Point {
        match self {
            Point::Flat(q) => Point::Flat(q + theta),
            Point::So3(r) => Point::So3(r.retract(&v3(theta))),
        }
    }

    /// Tangent vector at `self` whose displacement reaches `other`:
    /// `other - self` or `log(selfᵀ·other)`.
    pub fn log_to(&self, other: &Point) -> Result<DVector<f64>> {
        match (self, other) {
            (Point::Flat(a), Point::Flat(b)) if a.len() == b.len() => Ok(b - a),
            (Point::So3(a), Point::So3(b)) => Ok(dv(log_so3(&a.between(b))?)),
            _ => Err(Error::InvalidArgument("points live on different manifolds".into())),
        }
    }

    /// Geodesic interpolation, `s ∈ [0, 1]`.
    pub fn interpolate(&self, other: &Point, s: f64) -> Result<Point> {
        Ok(self.displace(&(self.log_to(other)? * s)))
    }

    pub fn as_flat(&self) -> Option<&DVector<f64>> {
        match self {
            Point::Flat(q) => Some(q),
            Point::So3(_) => None,
        }
    }

    pub fn as_rotation(&self) -> Option<&Rotation> {
        match self {
            Point::So3(r) => Some(r),
            Point::Flat(_) => None,
        }
    }
}

/// `½d²(target, q)`.
pub fn half_sq_distance(q: &Point, target: &Point) -> Result<f64> {
    Ok(0.5 * q.log_to(target)?.norm_squared())
}

/// Gradient in `q` of `½d²(target, q)`: `q - q*` on flat space,
/// `log(q*ᵀq)` in body coordinates on SO(3).
pub fn grad_half_sq_distance(q: &Point, target: &Point) -> Result<DVector<f64>> {
    Ok(-q.log_to(target)?)
}

/// Closed-form curvature `R(X,Y)Z`.
pub fn curvature(tag: ManifoldTag, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    match tag {
        ManifoldTag::Flat => DVector::zeros(z.len()),
        ManifoldTag::So3 => dv(v3(x).cross(&v3(y)).cross(&v3(z)) * -0.25),
    }
}

/// Connection term: `DY/Dt = Ẏ + connection(ω, Y)`.
pub fn connection(tag: ManifoldTag, w: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    match tag {
        ManifoldTag::Flat => DVector::zeros(y.len()),
        ManifoldTag::So3 => dv(v3(w).cross(&v3(y)) * 0.5),
    }
}

/// Maps a body velocity to the rate of the exponential coordinate `θ` in
/// `q = q₀·exp(θ)`.
pub(crate) fn dexp_inv(tag: ManifoldTag, theta: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    match tag {
        ManifoldTag::Flat => w.clone(),
        ManifoldTag::So3 => dv(dexp_inv_truncated(&v3(theta), &v3(w))),
    }
}

/// `Point::So3(exp(v))`.
pub fn so3_point(v: &DVector<f64>) -> Point {
    Point::So3(exp_so3(&v3(v)))
}

/// Costate pair `(p₁, p₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Costate {
    pub p1: DVector<f64>,
    pub p2: DVector<f64>,
}

impl Costate {
    pub fn zeros(n: usize) -> Self {
        Costate { p1: DVector::zeros(n), p2: DVector::zeros(n) }
    }
}

/// Jacobi field `Y` and its covariant derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationField {
    pub y: DVector<f64>,
    pub ydot: DVector<f64>,
}

/// Obstacle function `O(q)`; the region `O ≤ 0` is forbidden.
pub type ObstacleFn = Arc<dyn Fn(&Point) -> Result<(f64, DVector<f64>)> + Send + Sync>;

#[derive(Clone)]
pub enum Obstacle {
    /// `O(q) = d(c, q)² - ρ²`.
    Ball { center: Point, radius: f64 },
    /// Arbitrary smooth `O` returning its value and gradient.
    Custom(ObstacleFn),
}

impl fmt::Debug for Obstacle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Obstacle::Ball { center, radius } => {
                f.debug_struct("Ball").field("center", center).field("radius", radius).finish()
            }
            Obstacle::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Obstacle {
    pub fn eval(&self, q: &Point) -> Result<(f64, DVector<f64>)> {
        match self {
            Obstacle::Ball { center, radius } => {
                let e = q.log_to(center)?;
                Ok((e.norm_squared() - radius * radius, -e * 2.0))
            }
            Obstacle::Custom(f) => f(q),
        }
    }
}

/// Which necessary conditions the boundary-value problem encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Running cost `U + ½|v|² + (α/2)|u|² + V`, free endpoint.
    Avoidance,
    /// Running cost `(α/2)|u|²`, terminal cost `U(q(T)) + ½|v(T)|²`.
    Regulation,
}

/// Second-order control problem with target, barrier obstacles and horizon.
#[derive(Debug, Clone)]
pub struct AvoidanceScenario {
    pub alpha: f64,
    pub target: Point,
    pub obstacles: Vec<Obstacle>,
    pub horizon: f64,
    pub q0: Point,
    pub v0: DVector<f64>,
}

impl AvoidanceScenario {
    pub fn new(
        q0: Point,
        v0: DVector<f64>,
        target: Point,
        alpha: f64,
        horizon: f64,
        obstacles: Vec<Obstacle>,
    ) -> Result<Self> {
        let s = AvoidanceScenario { alpha, target, obstacles, horizon, q0, v0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be > 0, got {}", self.horizon)));
        }
        let n = self.q0.dim();
        if self.target.tag() != self.q0.tag() || self.target.dim() != n || self.v0.len() != n {
            return Err(Error::InvalidArgument("initial point, velocity and target dimensions differ".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if let Obstacle::Ball { center, radius } = o {
                if center.tag() != self.q0.tag() || center.dim() != n || !(*radius > 0.0) {
                    return Err(Error::InvalidArgument(format!("obstacle {i} is malformed")));
                }
            }
            if o.eval(&self.q0)?.0 <= 0.0 {
                return Err(Error::ObstacleContact { index: i, t: 0.0 });
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> ManifoldTag {
        self.q0.tag()
    }

    pub fn dim(&self) -> usize {
        self.q0.dim()
    }

    /// `V(q) = Σ 1/O_i(q)` and its gradient `-Σ grad O_i / O_i²`.
    pub fn barrier(&self, q: &Point, t: f64) -> Result<(f64, DVector<f64>)> {
        let mut v = 0.0;
        let mut g = DVector::zeros(self.dim());
        for (i, o) in self.obstacles.iter().enumerate() {
            let (val, grad) = o.eval(q)?;
            if !(val > 0.0) {
                return Err(Error::ObstacleContact { index: i, t });
            }
            v += 1.0 / val;
            g -= grad / (val * val);
        }
        Ok((v, g))
    }

    /// Smallest obstacle value at `q` (`+∞` without obstacles).
    pub fn clearance(&self, q: &Point) -> Result<f64> {
        let mut m = f64::INFINITY;
        for o in &self.obstacles {
            m = m.min(o.eval(q)?.0);
        }
        Ok(m)
    }
}

/// Running cost `L(q, v, u)` with its partial gradients.
pub trait RunningCost {
    fn value(&self, q: &Point, v: &DVector<f64>, u: &DVector<f64>, t: f64) -> Result<f64>;
    fn grad_q(&self, q: &Point, v: &DVector<f64>, u: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
    fn grad_v(&self, q: &Point, v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
}

/// `(α/2)|u|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlEffort {
    pub alpha: f64,
}

impl RunningCost for ControlEffort {
    fn value(&self, _: &Point, _: &DVector<f64>, u: &DVector<f64>, _: f64) -> Result<f64> {
        Ok(0.5 * self.alpha * u.norm_squared())
    }
    fn grad_q(&self, q: &Point, _: &DVector<f64>, _: &DVector<f64>, _: f64) -> Result<DVector<f64>> {
        Ok(DVector::zeros(q.dim()))
    }
    fn grad_v(&self, _: &Point, v: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(v.len())
    }
}

/// `U(q) + ½|v|² + (α/2)|u|² + V(q)` of an avoidance scenario.
#[derive(Debug, Clone, Copy)]
pub struct AvoidanceCost<'a>(pub &'a AvoidanceScenario);

impl RunningCost for AvoidanceCost<'_> {
    fn value(&self, q: &Point, v: &DVector<f64>, u: &DVector<f64>, t: f64) -> Result<f64> {
        let s = self.0;
        let (barrier, _) = s.barrier(q, t)?;
        Ok(half_sq_distance(q, &s.target)? + 0.5 * v.norm_squared() + 0.5 * s.alpha * u.norm_squared() + barrier)
    }
    fn grad_q(&self, q: &Point, _: &DVector<f64>, _: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let (_, g) = self.0.barrier(q, t)?;
        Ok(grad_half_sq_distance(q, &self.0.target)? + g)
    }
    fn grad_v(&self, _: &Point, v: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }
}

/// Trajectory `(q, v, u)` on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub q: Vec<Point>,
    pub v: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let h = self.step();
        if n < 2 || h <= 0.0 {
            return (0, 0.0);
        }
        let x = ((t - self.times[0]) / h).clamp(0.0, (n - 1) as f64);
        let k = (x.floor() as usize).min(n - 2);
        (k, x - k as f64)
    }

    /// Linear (geodesic for `q`) interpolation at `t`.
    pub fn sample(&self, t: f64) -> Result<(Point, DVector<f64>, DVector<f64>)> {
        let (k, s) = self.bracket(t);
        if self.times.len() < 2 || s == 0.0 {
            return Ok((self.q[k].clone(), self.v[k].clone(), self.u[k].clone()));
        }
        let lerp = |a: &DVector<f64>, b: &DVector<f64>| a * (1.0 - s) + b * s;
        Ok((
            self.q[k].interpolate(&self.q[k + 1], s)?,
            lerp(&self.v[k], &self.v[k + 1]),
            lerp(&self.u[k], &self.u[k + 1]),
        ))
    }

    pub fn control_at(&self, t: f64) -> DVector<f64> {
        let (k, s) = self.bracket(t);
        if self.times.len() < 2 || s == 0.0 {
            return self.u[k].clone();
        }
        &self.u[k] * (1.0 - s) + &self.u[k + 1] * s
    }
}

/// Result of a boundary-value solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BVPSolution {
    pub path: Path,
    /// Covariant derivative of the control, `Du/Dt`; empty for the oracle.
    pub udot: Vec<DVector<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub cost: f64,
}

impl BVPSolution {
    pub fn controls(&self) -> &[DVector<f64>] {
        &self.path.u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::hat;
    use proptest::prelude::*;

    fn d3(x: f64, y: f64, z: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y, z])
    }

    // Independent oracle: -¼ vee([[X̂, Ŷ], Ẑ]) via matrix commutators.
    fn bracket_curvature(x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let (xh, yh, zh) = (*hat(&v3(x)).matrix(), *hat(&v3(y)).matrix(), *hat(&v3(z)).matrix());
        let xy = xh * yh - yh * xh;
        let m = (xy * zh - zh * xy) * -0.25;
        d3(m[(2, 1)], m[(0, 2)], m[(1, 0)])
    }

    #[test]
    fn curvature_examples() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(curvature(ManifoldTag::Flat, &x, &x, &x), DVector::zeros(2));
        let a = d3(0.3, -1.0, 2.0);
        assert_eq!(curvature(ManifoldTag::So3, &a, &a, &d3(1.0, 0.0, 0.0)).norm(), 0.0);

        let (e1, e2) = (d3(1.0, 0.0, 0.0), d3(0.0, 1.0, 0.0));
        let r = curvature(ManifoldTag::So3, &e1, &e2, &e2);
        assert!((r - bracket_curvature(&e1, &e2, &e2)).norm() < 1e-15);
        // (e1×e2)×e2 = e3×e2 = -e1, so R = ¼e1 and ⟨R(X,Y)Y, X⟩ = ¼ > 0.
        assert!((curvature(ManifoldTag::So3, &e1, &e2, &e2) - d3(0.25, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ball_obstacle_gradient_matches_finite_difference() {
        let c = Point::So3(exp_so3(&Vector3::new(0.1, 0.2, 0.0)));
        let o = Obstacle::Ball { center: c, radius: 0.3 };
        let q = Point::So3(exp_so3(&Vector3::new(0.7, -0.1, 0.3)));
        let (_, g) = o.eval(&q).unwrap();
        let eps = 1e-6;
        for i in 0..3 {
            let mut e = DVector::zeros(3);
            e[i] = eps;
            let fd = (o.eval(&q.displace(&e)).unwrap().0 - o.eval(&q.displace(&-e)).unwrap().0) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-7);
        }
        let flat = Obstacle::Ball { center: Point::Flat(DVector::from_vec(vec![1.0, 0.0])), radius: 0.5 };
        let (val, g) = flat.eval(&Point::Flat(DVector::from_vec(vec![2.0, 1.0]))).unwrap();
        assert!((val - 1.75).abs() < 1e-15);
        assert_eq!(g, DVector::from_vec(vec![2.0, 2.0]));
    }

    #[test]
    fn scenario_rejects_start_inside_obstacle() {
        let zero = Point::Flat(DVector::zeros(2));
        let o = Obstacle::Ball { center: zero.clone(), radius: 0.1 };
        let err = AvoidanceScenario::new(zero.clone(), DVector::zeros(2), zero, 1.0, 1.0, vec![o]).unwrap_err();
        assert_eq!(err, Error::ObstacleContact { index: 0, t: 0.0 });
    }

    #[test]
    fn path_interpolation() {
        let pts: Vec<Point> = (0..3).map(|k| so3_point(&d3(0.0, 0.0, 0.1 * k as f64))).collect();
        let path = Path {
            times: vec![0.0, 0.5, 1.0],
            q: pts,
            v: vec![d3(0.0, 0.0, 0.0), d3(1.0, 0.0, 0.0), d3(2.0, 0.0, 0.0)],
            u: vec![d3(0.0, 0.0, 0.0); 3],
        };
        let (q, v, _) = path.sample(0.75).unwrap();
        let want = exp_so3(&Vector3::new(0.0, 0.0, 0.15));
        assert!((q.as_rotation().unwrap().matrix() - want.matrix()).norm() < 1e-14);
        assert!((v[0] - 1.5).abs() < 1e-15);
        assert_eq!(path.sample(2.0).unwrap().1[0], 2.0);
    }

    proptest! {
        #[test]
        fn curvature_matches_bracket_oracle(
            a in prop::array::uniform3(-2.0f64..2.0),
            b in prop::array::uniform3(-2.0f64..2.0),
            c in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let (x, y, z) = (d3(a[0], a[1], a[2]), d3(b[0], b[1], b[2]), d3(c[0], c[1], c[2]));
            let r = curvature(ManifoldTag::So3, &x, &y, &z);
            prop_assert!((&r - bracket_curvature(&x, &y, &z)).norm() < 1e-12);
            // ⟨R(X,Y)Z, W⟩ = -⟨R(X,Y)W, Z⟩
            let w = d3(c[1], a[2], b[0]);
            let lhs = r.dot(&w);
            let rhs = -curvature(ManifoldTag::So3, &x, &y, &w).dot(&z);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            // sectional curvature is nonnegative
            prop_assert!(curvature(ManifoldTag::So3, &x, &y, &y).dot(&x) >= -1e-12);
        }
    }
}
