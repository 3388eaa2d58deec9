//! Rotation-group primitives.
//!
//! Tangent vectors are expressed in body coordinates through the hat/vee
//! isomorphism between R³ and the antisymmetric matrices so(3). All norms
//! and distances use the bi-invariant metric, under which the Riemannian
//! exponential at R is `R * exp_so3(v)`.

use nalgebra::{Matrix3, Vector3};
use std::fmt;

use crate::error::{Error, Result};

/// Body-frame 3-vector: angular velocity, torque or log coordinates.
pub type BodyVector = Vector3<f64>;

/// Maximum Frobenius defect of `RᵀR - I` (and of `det R - 1`) accepted by [`Rotation::new`].
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Guard on `tr(R) + 1` below which the logarithm refuses to answer.
pub const LOG_CUT_LOCUS_EPS: f64 = 1e-6;

/// Angles below this use the series expansions instead of the closed forms.
pub const SMALL_ANGLE: f64 = 1e-4;

/// An element of SO(3).
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rotation({:?})", self.0.as_slice())
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Checked constructor: the matrix must be orthogonal with unit determinant
    /// to within `tol`. The matrix is not re-orthonormalized.
    pub fn with_tolerance(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let defect = orthogonality_defect(&m);
        if defect > tol {
            return Err(Error::InvalidRotation(format!(
                "orthogonality defect {defect:e} exceeds {tol:e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::InvalidRotation(format!("determinant {det} is not +1")));
        }
        Ok(Rotation(m))
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        Self::with_tolerance(m, ORTHOGONALITY_TOL)
    }

    /// Row-major construction from nine numbers.
    pub fn from_row_slice(rows: &[f64], tol: f64) -> Result<Self> {
        if rows.len() != 9 {
            return Err(Error::InvalidRotation(format!(
                "expected 9 entries, got {}",
                rows.len()
            )));
        }
        Self::with_tolerance(Matrix3::from_row_slice(rows), tol)
    }

    /// Wraps a matrix that is a rotation by construction (products and
    /// exponentials of rotations).
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major entries r11, r12, ..., r33.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    #[inline]
    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    #[inline]
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// `Rᵀ·other`, the rotation taking this frame to `other`.
    #[inline]
    pub fn between(&self, other: &Rotation) -> Rotation {
        Rotation(self.0.transpose() * other.0)
    }

    /// Right translation by the exponential of a body vector: `R·exp(v)`.
    #[inline]
    pub fn retract(&self, v: &BodyVector) -> Rotation {
        Rotation(self.0 * exp_so3(v).0)
    }

    #[inline]
    pub fn rotate(&self, v: &BodyVector) -> BodyVector {
        self.0 * v
    }

    /// Rotation angle in [0, π].
    pub fn angle(&self) -> f64 {
        let c = 0.5 * (self.0.trace() - 1.0);
        c.clamp(-1.0, 1.0).acos()
    }

    /// Frobenius norm of `RᵀR - I`.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

pub fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Antisymmetric 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewMatrix(Matrix3<f64>);

impl SkewMatrix {
    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    #[inline]
    pub fn apply(&self, w: &BodyVector) -> BodyVector {
        self.0 * w
    }
}

/// Symmetric positive-definite inertia tensor, with its inverse cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaTensor {
    j: Matrix3<f64>,
    j_inv: Matrix3<f64>,
}

impl InertiaTensor {
    pub fn new(j: Matrix3<f64>) -> Result<Self> {
        if j.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInertia("non-finite entry".into()));
        }
        let asym = (j - j.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::InvalidInertia(format!("asymmetry {asym:e}")));
        }
        let min_eig = j.symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(Error::InvalidInertia(format!(
                "not positive definite (min eigenvalue {min_eig})"
            )));
        }
        let j_inv = j
            .try_inverse()
            .ok_or_else(|| Error::InvalidInertia("singular".into()))?;
        Ok(InertiaTensor { j, j_inv })
    }

    pub fn diagonal(d: [f64; 3]) -> Result<Self> {
        Self::new(Matrix3::from_diagonal(&Vector3::from(d)))
    }

    pub fn spherical() -> Self {
        InertiaTensor {
            j: Matrix3::identity(),
            j_inv: Matrix3::identity(),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.j
    }

    #[inline]
    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.j_inv
    }

    /// ½ ωᵀJω
    pub fn kinetic_energy(&self, w: &BodyVector) -> f64 {
        0.5 * w.dot(&(self.j * w))
    }
}

pub fn hat(v: &BodyVector) -> SkewMatrix {
    SkewMatrix(Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    ))
}

/// Inverse of [`hat`] composed with the projection `(m - mᵀ)/2`, so any
/// 3×3 input is accepted.
pub fn vee(m: &Matrix3<f64>) -> BodyVector {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues exponential `I + (sin φ/φ) V + ((1 - cos φ)/φ²) V²` with `V = hat(v)`.
pub fn exp_so3(v: &BodyVector) -> Rotation {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = *hat(v).matrix();
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Principal logarithm `φ/sin φ · vee(Skew R)`, defined away from the cut locus.
pub fn log_so3(r: &Rotation) -> Result<BodyVector> {
    let tr = r.0.trace();
    if tr + 1.0 <= LOG_CUT_LOCUS_EPS {
        return Err(Error::AngleNearPi { trace: tr });
    }
    let phi = (0.5 * (tr - 1.0)).clamp(-1.0, 1.0).acos();
    let factor = if phi < SMALL_ANGLE {
        let p2 = phi * phi;
        1.0 + p2 / 6.0 + 7.0 * p2 * p2 / 360.0
    } else {
        phi / phi.sin()
    };
    Ok(vee(&r.0) * factor)
}

/// Bi-invariant geodesic distance `|log(r1ᵀ r2)|`.
pub fn geodesic_distance(r1: &Rotation, r2: &Rotation) -> Result<f64> {
    Ok(log_so3(&r1.between(r2))?.norm())
}

/// Right-translation approximation of parallel transport: the reference
/// velocity `w_ref` at `r_ref`, expressed in the body frame of `r`.
pub fn transport_velocity(r: &Rotation, r_ref: &Rotation, w_ref: &BodyVector) -> BodyVector {
    r.between(r_ref).rotate(w_ref)
}

/// Inverse right Jacobian series `w + ½θ×w + (1/12) θ×(θ×w)`, sufficient for
/// fourth-order Munthe-Kaas stages.
pub(crate) fn dexp_inv_truncated(theta: &BodyVector, w: &BodyVector) -> BodyVector {
    let tw = theta.cross(w);
    w + tw * 0.5 + theta.cross(&tw) / 12.0
}
