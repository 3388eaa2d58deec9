//! Direct transcription used to cross-check the shooting solver: the control
//! is a vector of grid values, the cost a trapezoid sum over states from a
//! symplectic-Euler recursion, minimized by gradient descent.

use nalgebra::DVector;
use rayon::prelude::*;

use super::shooting::{running_cost, terminal_cost};
use super::{AvoidanceScenario, BVPSolution, BoundaryMode, Path};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub mode: BoundaryMode,
    /// Number of grid points including both ends.
    pub n: usize,
    pub max_iter: usize,
    /// Stop when the L² norm of the cost gradient falls below this.
    pub grad_tol: f64,
    /// Central-difference step for the gradient.
    pub fd_step: f64,
    /// Evaluate gradient coordinates on the rayon pool.
    pub parallel: bool,
    pub initial: Option<Vec<DVector<f64>>>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            mode: BoundaryMode::Avoidance,
            n: 200,
            max_iter: 20_000,
            grad_tol: 1e-6,
            fd_step: 1e-6,
            parallel: true,
            initial: None,
        }
    }
}

/// Consecutive failed line searches tolerated before giving up.
const MAX_STALLS: usize = 50;
const ARMIJO: f64 = 1e-4;

fn rollout(s: &AvoidanceScenario, controls: &[DVector<f64>], horizon: f64) -> Path {
    let n = controls.len();
    let h = horizon / (n - 1) as f64;
    let mut path = Path {
        times: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        u: controls.to_vec(),
    };
    let (mut q, mut v) = (s.q0.clone(), s.v0.clone());
    for (k, u) in controls.iter().enumerate() {
        path.times.push(k as f64 * h);
        path.q.push(q.clone());
        path.v.push(v.clone());
        v += u * h;
        q = q.displace(&(&v * h));
    }
    path
}

/// Trapezoid cost of grid controls `u_0..u_{N-1}` over `[0, horizon]`, with
/// states from `v⁺ = v + h·u`, `q⁺ = q ⊕ h·v⁺`.
pub fn discrete_cost(s: &AvoidanceScenario, mode: BoundaryMode, controls: &[DVector<f64>], horizon: f64) -> Result<f64> {
    if controls.len() < 2 {
        return Err(Error::InvalidArgument("need at least two grid points".into()));
    }
    if controls.iter().any(|u| u.len() != s.dim()) {
        return Err(Error::InvalidArgument("control dimension does not match the scenario".into()));
    }
    let path = rollout(s, controls, horizon);
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

/// Samples a path's control onto an `n`-point grid over `[0, horizon]`.
pub fn sample_controls(path: &Path, n: usize, horizon: f64) -> Vec<DVector<f64>> {
    (0..n).map(|k| path.control_at(k as f64 * horizon / (n - 1) as f64)).collect()
}

fn pack(controls: &[DVector<f64>]) -> DVector<f64> {
    let m = controls[0].len();
    DVector::from_fn(controls.len() * m, |i, _| controls[i / m][i % m])
}

fn unpack(x: &DVector<f64>, m: usize) -> Vec<DVector<f64>> {
    x.as_slice().chunks(m).map(DVector::from_column_slice).collect()
}

/// Gradient descent in the L² metric of the control grid with a
/// Barzilai–Borwein trial step and Armijo backtracking.
pub fn transcription_oracle(s: &AvoidanceScenario, opts: &OracleOptions) -> Result<BVPSolution> {
    s.validate()?;
    if opts.n < 50 {
        return Err(Error::InvalidArgument(format!("transcription needs at least 50 grid points, got {}", opts.n)));
    }
    let m = s.dim();
    let n = opts.n;
    let h = s.horizon / (n - 1) as f64;
    // trapezoid weights per packed coordinate
    let weight = DVector::from_fn(n * m, |i, _| {
        let k = i / m;
        if k == 0 || k + 1 == n { 0.5 * h } else { h }
    });
    let cost = |x: &DVector<f64>| discrete_cost(s, opts.mode, &unpack(x, m), s.horizon);
    let fd = |x: &DVector<f64>, i: usize| -> Result<f64> {
        let d = opts.fd_step;
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += d;
        xm[i] -= d;
        Ok((cost(&xp)? - cost(&xm)?) / (2.0 * d))
    };
    // L² gradient: partial derivatives divided by the quadrature weights
    let gradient = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let parts: Vec<f64> = if opts.parallel {
            (0..n * m).into_par_iter().map(|i| fd(x, i)).collect::<Result<_>>()?
        } else {
            (0..n * m).map(|i| fd(x, i)).collect::<Result<_>>()?
        };
        Ok(DVector::from_vec(parts).component_div(&weight))
    };
    let l2 = |a: &DVector<f64>, b: &DVector<f64>| a.component_mul(&weight).dot(b);

    let mut x = match &opts.initial {
        Some(u) if u.len() == n && u.iter().all(|c| c.len() == m) => pack(u),
        Some(_) => return Err(Error::InvalidArgument("initial control grid has the wrong shape".into())),
        None => DVector::zeros(n * m),
    };
    let mut j = cost(&x)?;
    let mut g = gradient(&x)?;
    let mut gnorm = l2(&g, &g).sqrt();
    let mut step = 1.0;
    let mut stalls = 0;
    let mut iterations = 0;
    while gnorm > opts.grad_tol && iterations < opts.max_iter {
        iterations += 1;
        let mut a = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x - &g * a;
            if let Ok(jt) = cost(&trial) {
                if jt <= j - ARMIJO * a * gnorm * gnorm {
                    accepted = Some((trial, jt));
                    break;
                }
            }
            a *= 0.5;
        }
        let Some((x_new, j_new)) = accepted else {
            stalls += 1;
            if stalls >= MAX_STALLS {
                return Err(Error::NoDescent { stalled: stalls });
            }
            step = 1.0;
            continue;
        };
        stalls = 0;
        let g_new = gradient(&x_new)?;
        let sk = &x_new - &x;
        let yk = &g_new - &g;
        let sy = l2(&sk, &yk);
        step = if sy > 0.0 { l2(&sk, &sk) / sy } else { 1.0 };
        x = x_new;
        j = j_new;
        g = g_new;
        gnorm = l2(&g, &g).sqrt();
    }

    let controls = unpack(&x, m);
    let path = rollout(s, &controls, s.horizon);
    Ok(BVPSolution { path, udot: vec![], residual: gnorm, iterations, cost: j })
}
