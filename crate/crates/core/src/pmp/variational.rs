//! Jacobi-type equation for first-order perturbations of a controlled path.

use nalgebra::{DMatrix, DVector};

use super::{connection, curvature, Path, VariationField};
use crate::error::{Error, Result};

/// Propagates `(Y, DY/Dt)` along `base` with the control held fixed:
///
/// `D²Y/Dt² = -Hess W·Y + R(v, Y)v + D_Y(Σ u_j f_j)`.
///
/// On SO(3) the actuation fields are the left-invariant frame, whose
/// covariant derivative contributes `½ Y×u`. Base values between grid points
/// are interpolated linearly.
pub fn variational_propagate(
    base: &Path,
    y0: &DVector<f64>,
    ydot0: &DVector<f64>,
    hess_w: Option<&dyn Fn(&DVector<f64>) -> DMatrix<f64>>,
) -> Result<Vec<VariationField>> {
    let Some(first) = base.q.first() else {
        return Err(Error::InvalidArgument("empty base trajectory".into()));
    };
    let tag = first.tag();
    let n = first.dim();
    if y0.len() != n || ydot0.len() != n {
        return Err(Error::InvalidArgument("variation dimension does not match the base path".into()));
    }
    let rhs = |t: f64, y: &DVector<f64>, z: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let (q, v, u) = base.sample(t)?;
        let ydot = z - connection(tag, &v, y);
        let mut zdot = -connection(tag, &v, z) + curvature(tag, &v, y, &v) + connection(tag, y, &u);
        if let (Some(hw), Some(x)) = (hess_w, q.as_flat()) {
            zdot -= hw(x) * y;
        }
        Ok((ydot, zdot))
    };

    let h = base.step();
    let mut out = Vec::with_capacity(base.len());
    let (mut y, mut z) = (y0.clone(), ydot0.clone());
    out.push(VariationField { y: y.clone(), ydot: z.clone() });
    for k in 1..base.len() {
        let t = base.times[k - 1];
        let (a1, b1) = rhs(t, &y, &z)?;
        let (a2, b2) = rhs(t + 0.5 * h, &(&y + &a1 * (0.5 * h)), &(&z + &b1 * (0.5 * h)))?;
        let (a3, b3) = rhs(t + 0.5 * h, &(&y + &a2 * (0.5 * h)), &(&z + &b2 * (0.5 * h)))?;
        let (a4, b4) = rhs(t + h, &(&y + &a3 * h), &(&z + &b3 * h))?;
        y += (a1 + (a2 + a3) * 2.0 + a4) * (h / 6.0);
        z += (b1 + (b2 + b3) * 2.0 + b4) * (h / 6.0);
        out.push(VariationField { y: y.clone(), ydot: z.clone() });
    }
    Ok(out)
}
