//! Adjoint equations and the Hamiltonian along a given path.

use nalgebra::DVector;

use super::{connection, curvature, grad_half_sq_distance, AvoidanceScenario, BoundaryMode, Costate, Path, Point, RunningCost};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    pub times: Vec<f64>,
    pub costates: Vec<Costate>,
    /// `H = ⟨p₁, v⟩ + ⟨p₂, u⟩ + L` at each grid point.
    pub hamiltonian: Vec<f64>,
}

impl CostateTrajectory {
    /// `max H - min H`.
    pub fn hamiltonian_spread(&self) -> f64 {
        let (lo, hi) = self
            .hamiltonian
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)));
        hi - lo
    }
}

/// `p(T)` for the given boundary mode: zero for the free-endpoint avoidance
/// problem, `(grad U(q(T)), v(T))` for the terminal cost `U + ½|v|²`.
pub fn terminal_costate(s: &AvoidanceScenario, mode: BoundaryMode, q_t: &Point, v_t: &DVector<f64>) -> Result<Costate> {
    Ok(match mode {
        BoundaryMode::Avoidance => Costate::zeros(s.dim()),
        BoundaryMode::Regulation => Costate { p1: grad_half_sq_distance(q_t, &s.target)?, p2: v_t.clone() },
    })
}

/// Integrates backward from `terminal`
///
/// `Dp₁/Dt = -R(v, p₂)v - grad_q L`, `Dp₂/Dt = -p₁ - grad_v L`
///
/// with RK4 on the path's grid, interpolating the path linearly.
pub fn costate_integrate(path: &Path, cost: &dyn RunningCost, terminal: &Costate) -> Result<CostateTrajectory> {
    let Some(last) = path.q.last() else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    let tag = last.tag();
    if terminal.p1.len() != last.dim() || terminal.p2.len() != last.dim() {
        return Err(Error::InvalidArgument("terminal costate dimension does not match the path".into()));
    }
    let rhs = |t: f64, p1: &DVector<f64>, p2: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let (q, v, u) = path.sample(t)?;
        let d1 = -connection(tag, &v, p1) - curvature(tag, &v, p2, &v) - cost.grad_q(&q, &v, &u, t)?;
        let d2 = -connection(tag, &v, p2) - p1 - cost.grad_v(&q, &v, &u);
        Ok((d1, d2))
    };

    let n = path.len();
    let h = -path.step();
    let mut costates = vec![terminal.clone(); n];
    let (mut p1, mut p2) = (terminal.p1.clone(), terminal.p2.clone());
    for k in (0..n.saturating_sub(1)).rev() {
        let t = path.times[k + 1];
        let (a1, b1) = rhs(t, &p1, &p2)?;
        let (a2, b2) = rhs(t + 0.5 * h, &(&p1 + &a1 * (0.5 * h)), &(&p2 + &b1 * (0.5 * h)))?;
        let (a3, b3) = rhs(t + 0.5 * h, &(&p1 + &a2 * (0.5 * h)), &(&p2 + &b2 * (0.5 * h)))?;
        let (a4, b4) = rhs(t + h, &(&p1 + &a3 * h), &(&p2 + &b3 * h))?;
        p1 += (a1 + (a2 + a3) * 2.0 + a4) * (h / 6.0);
        p2 += (b1 + (b2 + b3) * 2.0 + b4) * (h / 6.0);
        costates[k] = Costate { p1: p1.clone(), p2: p2.clone() };
    }

    let mut hamiltonian = Vec::with_capacity(n);
    for k in 0..n {
        let c = &costates[k];
        let (q, v, u) = (&path.q[k], &path.v[k], &path.u[k]);
        hamiltonian.push(c.p1.dot(v) + c.p2.dot(u) + cost.value(q, v, u, path.times[k])?);
    }
    Ok(CostateTrajectory { times: path.times.clone(), costates, hamiltonian })
}
