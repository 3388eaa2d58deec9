//! Single shooting on the necessary conditions, with `(u(0), Du/Dt(0))` as unknowns.
//!
//! From `u = -p₂/α` and the costate equations, the optimal control obeys
//!
//! - avoidance: `D²u/Dt² = R(v,u)v - (1/α)grad(U+V)(q) + u/α`,
//!   `u(T) = 0`, `Du/Dt(T) = v(T)/α`;
//! - regulation: `D²u/Dt² = R(v,u)v`,
//!   `u(T) = -v(T)/α`, `Du/Dt(T) = grad U(q(T))/α`.

use nalgebra::{DMatrix, DVector};

use super::integrate::{grid, rk4_step};
use super::{
    connection, curvature, grad_half_sq_distance, half_sq_distance, AvoidanceCost, AvoidanceScenario, BVPSolution,
    BoundaryMode, ControlEffort, ManifoldTag, Obstacle, Path, Point, RunningCost,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingOptions {
    pub mode: BoundaryMode,
    pub h: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step: f64,
    /// Starting `(u(0), Du/Dt(0))`. When absent and the scenario has
    /// obstacles, the guess comes from the obstacle-free problem followed by
    /// `continuation_stages` solves with ball radii grown to full size.
    pub initial_guess: Option<DVector<f64>>,
    pub continuation_stages: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            mode: BoundaryMode::Avoidance,
            h: 1e-3,
            tol: 1e-6,
            max_iter: 100,
            fd_step: 1e-7,
            initial_guess: None,
            continuation_stages: 4,
        }
    }
}

/// `D²u/Dt²` for the avoidance problem.
pub fn avoidance_rhs(
    t: f64,
    u: &DVector<f64>,
    _udot: &DVector<f64>,
    q: &Point,
    v: &DVector<f64>,
    s: &AvoidanceScenario,
) -> Result<DVector<f64>> {
    let (_, grad_v) = s.barrier(q, t)?;
    let grad = grad_half_sq_distance(q, &s.target)? + grad_v;
    Ok(curvature(q.tag(), v, u, v) + (u - grad) / s.alpha)
}

/// `D²u/Dt²` for finite-time regulation.
pub fn regulation_rhs(tag: ManifoldTag, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    curvature(tag, v, u, v)
}

pub(crate) fn running_cost<'a>(s: &'a AvoidanceScenario, mode: BoundaryMode) -> Box<dyn RunningCost + 'a> {
    match mode {
        BoundaryMode::Avoidance => Box::new(AvoidanceCost(s)),
        BoundaryMode::Regulation => Box::new(ControlEffort { alpha: s.alpha }),
    }
}

pub(crate) fn terminal_cost(s: &AvoidanceScenario, mode: BoundaryMode, q: &Point, v: &DVector<f64>) -> Result<f64> {
    Ok(match mode {
        BoundaryMode::Avoidance => 0.0,
        BoundaryMode::Regulation => half_sq_distance(q, &s.target)? + 0.5 * v.norm_squared(),
    })
}

struct Terminal {
    q: Point,
    v: DVector<f64>,
    u: DVector<f64>,
    z: DVector<f64>,
}

fn propagate(
    s: &AvoidanceScenario,
    mode: BoundaryMode,
    h: f64,
    x: &DVector<f64>,
    mut record: Option<(&mut Path, &mut Vec<DVector<f64>>)>,
) -> Result<Terminal> {
    let n = s.dim();
    let tag = s.tag();
    let (steps, step) = grid(s.horizon, h)?;
    let mut rhs = |t: f64, q: &Point, y: &[DVector<f64>]| -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        let (v, u, z) = (&y[0], &y[1], &y[2]);
        let f = match mode {
            BoundaryMode::Avoidance => avoidance_rhs(t, u, z, q, v, s)?,
            BoundaryMode::Regulation => regulation_rhs(tag, u, v),
        };
        let vdot = u - connection(tag, v, v);
        let udot = z - connection(tag, v, u);
        let zdot = f - connection(tag, v, z);
        Ok((v.clone(), vec![vdot, udot, zdot]))
    };
    let mut q = s.q0.clone();
    let mut y = vec![s.v0.clone(), x.rows(0, n).into_owned(), x.rows(n, n).into_owned()];
    for k in 0..=steps {
        let t = k as f64 * step;
        if let Some((path, zs)) = record.as_mut() {
            path.times.push(t);
            path.q.push(q.clone());
            path.v.push(y[0].clone());
            path.u.push(y[1].clone());
            zs.push(y[2].clone());
        }
        if k < steps {
            (q, y) = rk4_step(&q, &y, t, step, &mut rhs)?;
            if !y.iter().all(|c| c.iter().all(|e| e.is_finite())) {
                return Err(Error::NumericalDivergence { t: t + step, norm: y[1].norm() });
            }
        }
    }
    s.barrier(&q, s.horizon)?;
    let mut y = y.into_iter();
    let (v, u, z) = (y.next().unwrap(), y.next().unwrap(), y.next().unwrap());
    Ok(Terminal { q, v, u, z })
}

fn residual(s: &AvoidanceScenario, mode: BoundaryMode, e: &Terminal) -> Result<DVector<f64>> {
    let n = s.dim();
    let (a, b) = match mode {
        BoundaryMode::Avoidance => (e.u.clone(), &e.z - &e.v / s.alpha),
        BoundaryMode::Regulation => (&e.u + &e.v / s.alpha, &e.z - grad_half_sq_distance(&e.q, &s.target)? / s.alpha),
    };
    let mut r = DVector::zeros(2 * n);
    r.rows_mut(0, n).copy_from(&a);
    r.rows_mut(n, n).copy_from(&b);
    Ok(r)
}

/// Trapezoid estimate of the cost of a sampled path.
pub(crate) fn path_cost(s: &AvoidanceScenario, mode: BoundaryMode, path: &Path) -> Result<f64> {
    let cost = running_cost(s, mode);
    let h = path.step();
    let n = path.len();
    let mut j = 0.0;
    for k in 0..n {
        let w = if k == 0 || k + 1 == n { 0.5 * h } else { h };
        j += w * cost.value(&path.q[k], &path.v[k], &path.u[k], path.times[k])?;
    }
    Ok(j + terminal_cost(s, mode, &path.q[n - 1], &path.v[n - 1])?)
}

fn newton(s: &AvoidanceScenario, opts: &ShootingOptions, mut x: DVector<f64>) -> Result<(DVector<f64>, f64, usize)> {
    let n = s.dim();
    let mode = opts.mode;
    let eval = |x: &DVector<f64>| -> Result<DVector<f64>> { residual(s, mode, &propagate(s, mode, opts.h, x, None)?) };
    let mut r = eval(&x)?;
    let mut iterations = 0;
    while r.norm() > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: r.norm() });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..2 * n {
            let d = opts.fd_step * (1.0 + x[i].abs());
            let mut xp = x.clone();
            xp[i] += d;
            let col = match eval(&xp) {
                Ok(rp) => (rp - &r) / d,
                Err(Error::ObstacleContact { .. }) => {
                    xp[i] = x[i] - d;
                    (&r - eval(&xp)?) / d
                }
                Err(e) => return Err(e),
            };
            jac.set_column(i, &col);
        }
        let dx = jac
            .lu()
            .solve(&(-&r))
            .ok_or(Error::NoConvergence { iterations, residual: r.norm() })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x + &dx * lambda;
            match eval(&trial) {
                Ok(rt) if rt.norm() < r.norm() => {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
                Ok(_) | Err(Error::ObstacleContact { .. }) | Err(Error::NumericalDivergence { .. }) => lambda *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations, residual: r.norm() });
        }
    }
    Ok((x, r.norm(), iterations))
}

/// Shrinks every ball obstacle's radius by `scale`.
fn scaled(s: &AvoidanceScenario, scale: f64) -> AvoidanceScenario {
    let obstacles = s
        .obstacles
        .iter()
        .map(|o| match o {
            Obstacle::Ball { center, radius } => Obstacle::Ball { center: center.clone(), radius: radius * scale },
            other => other.clone(),
        })
        .collect();
    AvoidanceScenario { obstacles, ..s.clone() }
}

/// Damped Newton on the terminal residual map, forward-difference Jacobian.
/// A trial step that drives the path into an obstacle is halved like any
/// other non-decreasing step.
pub fn shooting_solve(s: &AvoidanceScenario, opts: &ShootingOptions) -> Result<BVPSolution> {
    s.validate()?;
    let n = s.dim();
    let (x, residual, iterations) = match &opts.initial_guess {
        Some(g) if g.len() == 2 * n => newton(s, opts, g.clone())?,
        Some(g) => {
            return Err(Error::InvalidArgument(format!("initial guess has length {}, expected {}", g.len(), 2 * n)));
        }
        None if s.obstacles.is_empty() || opts.continuation_stages == 0 => newton(s, opts, DVector::zeros(2 * n))?,
        None => {
            // Newton from zero tends to stall on a stationary point that hugs
            // the start; follow the obstacle-free optimum instead.
            let free = AvoidanceScenario { obstacles: vec![], ..s.clone() };
            let (mut x, _, mut total) = newton(&free, opts, DVector::zeros(2 * n))?;
            let m = opts.continuation_stages;
            let mut last = 0.0;
            for k in 0..=m {
                let scale = if k == 0 { 0.02 } else { k as f64 / m as f64 };
                let (xk, rk, it) = newton(&scaled(s, scale), opts, x)?;
                x = xk;
                last = rk;
                total += it;
            }
            (x, last, total)
        }
    };
    let mut path = Path { times: vec![], q: vec![], v: vec![], u: vec![] };
    let mut udot = vec![];
    propagate(s, opts.mode, opts.h, &x, Some((&mut path, &mut udot)))?;
    let cost = path_cost(s, opts.mode, &path)?;
    Ok(BVPSolution { path, udot, residual, iterations, cost })
}
