//! Rigid body with a fixed point, the Lie–Euler integrator, and the flat
//! double integrator used by the boundary-value solvers.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::so3::{exp_so3, BodyVector, InertiaTensor, Rotation};

/// |ω| above which a simulation is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Point of TSO(3) in body coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidBodyState {
    pub r: Rotation,
    pub w: BodyVector,
}

impl RigidBodyState {
    pub fn new(r: Rotation, w: BodyVector) -> Self {
        RigidBodyState { r, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub h: f64,
    pub t_end: f64,
    pub inertia: InertiaTensor,
}

impl SimParams {
    pub fn new(h: f64, t_end: f64, inertia: InertiaTensor) -> Result<Self> {
        if !(h > 0.0 && h <= 0.01) {
            return Err(Error::InvalidArgument(format!("step must satisfy 0 < h <= 0.01, got {h}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be > 0, got {t_end}")));
        }
        Ok(SimParams { h, t_end, inertia })
    }

    /// Number of steps, `ceil(t_end / h)`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.h) - 1e-9).ceil().max(1.0) as usize
    }
}

/// State of the flat double integrator `q'' = -grad W(q) + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl FlatState {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Self {
        assert_eq!(q.len(), v.len(), "configuration and velocity dimensions differ");
        FlatState { q, v }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Time-indexed states, controls and named scalar diagnostics sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog<S, C = BodyVector> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub controls: Vec<C>,
    pub diagnostics: BTreeMap<String, Vec<f64>>,
}

impl<S, C> Default for TrajectoryLog<S, C> {
    fn default() -> Self {
        TrajectoryLog {
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            diagnostics: BTreeMap::new(),
        }
    }
}

impl<S, C> TrajectoryLog<S, C> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, state: S, control: C) {
        self.times.push(t);
        self.states.push(state);
        self.controls.push(control);
    }

    /// Attaches a diagnostic channel; its length must match the log.
    pub fn set_channel(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "channel {name} has {} samples, log has {}",
                values.len(),
                self.len()
            )));
        }
        self.diagnostics.insert(name.to_string(), values);
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.diagnostics.get(name).map(Vec::as_slice)
    }

    pub fn last_state(&self) -> Option<&S> {
        self.states.last()
    }
}

/// Euler's equations `ω' = J⁻¹(Jω × ω) + τ`.
pub fn euler_rhs(w: &BodyVector, tau: &BodyVector, j: &InertiaTensor) -> BodyVector {
    j.inverse() * (j.matrix() * w).cross(w) + tau
}

/// `R⁺ = R·exp(hω)`, `ω⁺ = ω + h·(J⁻¹(Jω × ω) + τ)`, torque taken at the pre-step state.
pub fn lie_euler_step(
    s: &RigidBodyState,
    tau: &BodyVector,
    h: f64,
    j: &InertiaTensor,
) -> RigidBodyState {
    RigidBodyState {
        r: Rotation::from_matrix_unchecked(s.r.matrix() * exp_so3(&(s.w * h)).matrix()),
        w: s.w + euler_rhs(&s.w, tau, j) * h,
    }
}

/// Closed-loop simulation with the Lie–Euler scheme.
///
/// The log has `ceil(t_end/h) + 1` samples at `t_i = i·h`; the control
/// recorded at sample `i` is the torque applied over `[t_i, t_i + h)` (the
/// last one is evaluated but not applied). A `kinetic_energy` channel is
/// attached.
pub fn simulate<F>(
    mut controller: F,
    init: RigidBodyState,
    p: &SimParams,
) -> Result<TrajectoryLog<RigidBodyState>>
where
    F: FnMut(f64, &RigidBodyState) -> Result<BodyVector>,
{
    let n = p.steps();
    let mut log = TrajectoryLog {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        controls: Vec::with_capacity(n + 1),
        diagnostics: BTreeMap::new(),
    };
    let mut state = init;
    for i in 0..=n {
        let t = i as f64 * p.h;
        let norm = state.w.norm();
        if !(norm <= DIVERGENCE_LIMIT) {
            return Err(Error::NumericalDivergence { t, norm });
        }
        let tau = controller(t, &state)?;
        log.push(t, state, tau);
        if i < n {
            state = lie_euler_step(&state, &tau, p.h, &p.inertia);
        }
    }
    let energy = log
        .states
        .iter()
        .map(|s| p.inertia.kinetic_energy(&s.w))
        .collect();
    log.set_channel("kinetic_energy", energy)?;
    Ok(log)
}

/// Symplectic Euler: `v⁺ = v + h(-grad W(q) + u)`, `q⁺ = q + h·v⁺`.
pub fn flat_step<G>(s: &FlatState, u: &DVector<f64>, h: f64, grad_w: G) -> FlatState
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let v = &s.v + (u - grad_w(&s.q)) * h;
    let q = &s.q + &v * h;
    FlatState { q, v }
}

/// Gradient of the zero potential.
pub fn no_potential(q: &DVector<f64>) -> DVector<f64> {
    DVector::zeros(q.len())
}
