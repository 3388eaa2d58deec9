//! Fourth-order one-step integration on `M × ℝᵐ`: classical RK4 on flat
//! space, Runge–Kutta–Munthe-Kaas on SO(3).

use nalgebra::DVector;

use super::{dexp_inv, Path, Point};
use crate::error::{Error, Result};

/// Uniform grid over `[0, horizon]`: `(intervals, step)` with
/// `intervals = ceil(horizon / h)`.
pub(crate) fn grid(horizon: f64, h: f64) -> Result<(usize, f64)> {
    if !(h > 0.0 && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("need h > 0 and horizon > 0 (h = {h}, horizon = {horizon})")));
    }
    let n = ((horizon / h) - 1e-9).ceil().max(1.0) as usize;
    Ok((n, horizon / n as f64))
}

type Vectors = Vec<DVector<f64>>;

fn axpy(y: &[DVector<f64>], a: f64, k: &[DVector<f64>]) -> Vectors {
    y.iter().zip(k).map(|(y, k)| y + k * a).collect()
}

/// One step of `q̇ = q·w(t, q, y)`, `ẏ = g(t, q, y)`, where `f` returns `(w, g)`.
pub(crate) fn rk4_step<F>(q: &Point, y: &[DVector<f64>], t: f64, h: f64, f: &mut F) -> Result<(Point, Vectors)>
where
    F: FnMut(f64, &Point, &[DVector<f64>]) -> Result<(DVector<f64>, Vectors)>,
{
    let tag = q.tag();
    let (w1, k1) = f(t, q, y)?;
    let th2 = &w1 * (0.5 * h);
    let (w2, k2) = f(t + 0.5 * h, &q.displace(&th2), &axpy(y, 0.5 * h, &k1))?;
    let c2 = dexp_inv(tag, &th2, &w2);
    let th3 = &c2 * (0.5 * h);
    let (w3, k3) = f(t + 0.5 * h, &q.displace(&th3), &axpy(y, 0.5 * h, &k2))?;
    let c3 = dexp_inv(tag, &th3, &w3);
    let th4 = &c3 * h;
    let (w4, k4) = f(t + h, &q.displace(&th4), &axpy(y, h, &k3))?;
    let c4 = dexp_inv(tag, &th4, &w4);
    let theta = (w1 + (c2 + c3) * 2.0 + c4) * (h / 6.0);
    let y_next = y
        .iter()
        .enumerate()
        .map(|(i, yi)| yi + (&k1[i] + (&k2[i] + &k3[i]) * 2.0 + &k4[i]) * (h / 6.0))
        .collect();
    Ok((q.displace(&theta), y_next))
}

/// Open-loop trajectory of `Dv/Dt = u(t) - grad W(q)`, sampled on the
/// integration grid. The potential is only meaningful on flat space.
pub fn integrate_controlled<U>(
    q0: &Point,
    v0: &DVector<f64>,
    u: U,
    grad_w: Option<&dyn Fn(&DVector<f64>) -> DVector<f64>>,
    horizon: f64,
    h: f64,
) -> Result<Path>
where
    U: Fn(f64) -> DVector<f64>,
{
    if q0.dim() != v0.len() {
        return Err(Error::InvalidArgument("velocity dimension does not match the configuration".into()));
    }
    let (n, step) = grid(horizon, h)?;
    let mut rhs = |t: f64, q: &Point, y: &[DVector<f64>]| -> Result<(DVector<f64>, Vectors)> {
        let mut a = u(t);
        if let (Some(g), Point::Flat(x)) = (grad_w, q) {
            a -= g(x);
        }
        Ok((y[0].clone(), vec![a]))
    };
    let mut path = Path {
        times: Vec::with_capacity(n + 1),
        q: Vec::with_capacity(n + 1),
        v: Vec::with_capacity(n + 1),
        u: Vec::with_capacity(n + 1),
    };
    let (mut q, mut y) = (q0.clone(), vec![v0.clone()]);
    for k in 0..=n {
        let t = k as f64 * step;
        path.times.push(t);
        path.q.push(q.clone());
        path.v.push(y[0].clone());
        path.u.push(u(t));
        if k < n {
            (q, y) = rk4_step(&q, &y, t, step, &mut rhs)?;
        }
    }
    Ok(path)
}
