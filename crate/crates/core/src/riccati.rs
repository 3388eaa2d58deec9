//! Riccati equations behind the geometric LQR gains.
//!
//! The value-function ansatz `V = k1·U + (k2/2)|v|² + k3⟨grad U, v⟩` turns
//! the HJB equation into three coupled scalar equations in (k1, k2, k3).
//! Written as `K = [[k1, k3], [k3, k2]]` they are a 2×2 algebraic Riccati
//! equation with `B = [0; 1]`, `Q = I₂` and control weight α.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3};

use crate::error::{Error, Result};

/// Quadratic cost weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Control weight α > 0.
    pub alpha: f64,
    /// Discount rate γ.
    pub gamma: f64,
    /// State weight, symmetric positive semidefinite.
    pub q_weights: Matrix2<f64>,
}

impl CostParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        Self::with_weights(alpha, gamma, Matrix2::identity())
    }

    pub fn with_weights(alpha: f64, gamma: f64, q_weights: Matrix2<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        Ok(CostParams {
            alpha,
            gamma,
            q_weights,
        })
    }
}

/// Symmetric `K = [[k1, k3], [k3, k2]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RiccatiSolution {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl RiccatiSolution {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Self {
        RiccatiSolution { k1, k2, k3 }
    }

    /// Reads the symmetric part of `m`.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        RiccatiSolution {
            k1: m[(0, 0)],
            k2: m[(1, 1)],
            k3: 0.5 * (m[(0, 1)] + m[(1, 0)]),
        }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.k1, self.k3, self.k3, self.k2)
    }

    fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.k1, self.k2, self.k3)
    }

    fn from_vector(v: &Vector3<f64>) -> Self {
        RiccatiSolution::new(v[0], v[1], v[2])
    }

    pub fn is_positive_definite(&self) -> bool {
        self.k1 > 0.0 && self.k2 > 0.0 && self.k1 * self.k2 - self.k3 * self.k3 > 0.0
    }

    pub fn gains(&self, alpha: f64) -> GainPair {
        GainPair {
            kp: self.k3 / alpha,
            kd: self.k2 / alpha,
        }
    }
}

/// Proportional and derivative gains of the PD law.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GainPair {
    pub kp: f64,
    pub kd: f64,
}

/// `(k1 - k3k2/α ...)`: residuals of the three scalar Riccati equations
/// `1 - k3²/α = γk1`, `1 + 2k3 - k2²/α = γk2`, `k1 - k3k2/α = γk3`.
pub fn scalar_residual(sol: &RiccatiSolution, p: &CostParams) -> Vector3<f64> {
    let RiccatiSolution { k1, k2, k3 } = *sol;
    let (a, g) = (p.alpha, p.gamma);
    Vector3::new(
        1.0 - k3 * k3 / a - g * k1,
        1.0 + 2.0 * k3 - k2 * k2 / a - g * k2,
        k1 - k3 * k2 / a - g * k3,
    )
}

/// `(kP, kD) = (k3/α, k2/α)`.
pub fn gains_from_k(sol: &RiccatiSolution, p: &CostParams) -> GainPair {
    sol.gains(p.alpha)
}

/// Drift matrix used to pose the scalar system as a matrix Riccati equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AMatrixMode {
    /// `[[0, 2], [0, 0]]` regardless of γ; gives the regulation gains (1.4142, 2.7671) at α = 1/2.
    PaperRegulation,
    /// `[[-γ, 2], [0, -γ]]`; gives the tracking gains (8.7852, 8.3357) at α = 1, γ = -2.
    PaperTracking,
    /// `[[-γ/2, 1], [0, -γ/2]]`; the matrix form of the scalar system.
    Reconciled,
}

impl AMatrixMode {
    pub fn matrix(self, gamma: f64) -> Matrix2<f64> {
        match self {
            AMatrixMode::PaperRegulation => Matrix2::new(0.0, 2.0, 0.0, 0.0),
            AMatrixMode::PaperTracking => Matrix2::new(-gamma, 2.0, 0.0, -gamma),
            AMatrixMode::Reconciled => Matrix2::new(-0.5 * gamma, 1.0, 0.0, -0.5 * gamma),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AMatrixMode::PaperRegulation => "paper-regulation",
            AMatrixMode::PaperTracking => "paper-tracking",
            AMatrixMode::Reconciled => "reconciled",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "paper-regulation" => Some(AMatrixMode::PaperRegulation),
            "paper-tracking" => Some(AMatrixMode::PaperTracking),
            "reconciled" => Some(AMatrixMode::Reconciled),
            _ => None,
        }
    }
}

/// Input actuation vector `[0; 1]` of the double integrator.
pub fn actuation() -> Vector2<f64> {
    Vector2::new(0.0, 1.0)
}

/// `AᵀK + KA - K·B·Rw⁻¹·Bᵀ·K + Q`
pub fn are_residual_matrix(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    q: &Matrix2<f64>,
    rw: f64,
    k: &Matrix2<f64>,
) -> Matrix2<f64> {
    let s = b * b.transpose() / rw;
    a.transpose() * k + k * a - k * s * k + q
}

pub fn are_residual(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    q: &Matrix2<f64>,
    rw: f64,
    sol: &RiccatiSolution,
) -> f64 {
    are_residual_matrix(a, b, q, rw, &sol.matrix()).norm()
}

fn validate_inputs(a: &Matrix2<f64>, b: &Vector2<f64>, q: &Matrix2<f64>, rw: f64) -> Result<()> {
    if !(rw > 0.0 && rw.is_finite()) {
        return Err(Error::InvalidArgument(format!("control weight must be > 0, got {rw}")));
    }
    if a.iter().chain(b.iter()).chain(q.iter()).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite Riccati data".into()));
    }
    if (q - q.transpose()).abs().max() > 1e-12 {
        return Err(Error::InvalidArgument("Q must be symmetric".into()));
    }
    if q.symmetric_eigenvalues().min() < -1e-12 {
        return Err(Error::InvalidArgument("Q must be positive semidefinite".into()));
    }
    Ok(())
}

fn is_controllable(a: &Matrix2<f64>, b: &Vector2<f64>) -> bool {
    let ab = a * b;
    let det = b[0] * ab[1] - b[1] * ab[0];
    let scale = b.norm() * ab.norm().max(b.norm() * a.norm());
    scale > 0.0 && det.abs() > 1e-12 * scale
}

/// Solves `Acᵀ·X + X·Ac = -C` for symmetric `X` (2×2 Lyapunov equation).
fn lyapunov_2x2(ac: &Matrix2<f64>, c: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let (a, b, cc, d) = (ac[(0, 0)], ac[(0, 1)], ac[(1, 0)], ac[(1, 1)]);
    let m = Matrix3::new(
        2.0 * a, 0.0, 2.0 * cc, //
        0.0, 2.0 * d, 2.0 * b, //
        b, cc, a + d,
    );
    let rhs = -Vector3::new(c[(0, 0)], c[(1, 1)], 0.5 * (c[(0, 1)] + c[(1, 0)]));
    let x = m.lu().solve(&rhs)?;
    Some(Matrix2::new(x[0], x[2], x[2], x[1]))
}

fn is_hurwitz(m: &Matrix2<f64>) -> bool {
    m.trace() < 0.0 && m.determinant() > 0.0
}

/// Complex square root with non-negative real part, as `(re, im)`.
fn csqrt(re: f64, im: f64) -> (f64, f64) {
    let r = re.hypot(im);
    let sr = (0.5 * (r + re)).max(0.0).sqrt();
    let si = (0.5 * (r - re)).max(0.0).sqrt();
    (sr, if im < 0.0 { -si } else { si })
}

/// Stabilizing solution of `AᵀK + KA - K·B·Rw⁻¹·Bᵀ·K = -Q`.
///
/// The stable invariant subspace of the Hamiltonian matrix
/// `[[A, -B·Rw⁻¹·Bᵀ], [-Q, -Aᵀ]]` is the null space of
/// `(H - λa)(H - λb)`, where λa, λb are its stable eigenvalues. These come
/// in closed form because the characteristic polynomial of a Hamiltonian
/// matrix is even. `K = X2·X1⁻¹` from that subspace is then polished by
/// Newton–Kleinman iterations.
pub fn are_solve(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    q: &Matrix2<f64>,
    rw: f64,
) -> Result<RiccatiSolution> {
    validate_inputs(a, b, q, rw)?;
    if !is_controllable(a, b) {
        return Err(Error::NotControllable);
    }
    let s = b * b.transpose() / rw;

    let mut h = Matrix4::zeros();
    h.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    h.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-s));
    h.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-q));
    h.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-a.transpose()));

    // λ⁴ + c2·λ² + c0 with c2 = -tr(H²)/2, c0 = det H.
    let h2 = h * h;
    let c2 = -0.5 * h2.trace();
    let c0 = h.determinant();
    let disc = c2 * c2 - 4.0 * c0;
    let (mu1, mu2) = if disc >= 0.0 {
        let sq = disc.sqrt();
        ((0.5 * (-c2 + sq), 0.0), (0.5 * (-c2 - sq), 0.0))
    } else {
        let sq = (-disc).sqrt();
        ((-0.5 * c2, 0.5 * sq), (-0.5 * c2, -0.5 * sq))
    };
    let la = csqrt(mu1.0, mu1.1);
    let lb = csqrt(mu2.0, mu2.1);
    let scale = h.norm().max(1.0);
    if la.0 <= 1e-10 * scale || lb.0 <= 1e-10 * scale {
        return Err(Error::NoStabilizingSolution);
    }
    // stable pair: -la, -lb; sum and product are real
    let sum = -(la.0 + lb.0);
    let prod = la.0 * lb.0 - la.1 * lb.1;
    let m = h2 - h * sum + Matrix4::identity() * prod;

    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::NoStabilizingSolution)?;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let n0 = v_t.row(order[0]).transpose();
    let n1 = v_t.row(order[1]).transpose();
    let x1 = Matrix2::new(n0[0], n1[0], n0[1], n1[1]);
    let x2 = Matrix2::new(n0[2], n1[2], n0[3], n1[3]);
    let x1_inv = x1.try_inverse().ok_or(Error::NoStabilizingSolution)?;
    let mut k = x2 * x1_inv;
    k = (k + k.transpose()) * 0.5;

    k = newton_refine(a, &s, q, k);

    let residual = (a.transpose() * k + k * a - k * s * k + q).norm();
    if !is_hurwitz(&(a - s * k)) || !residual.is_finite() {
        return Err(Error::NoStabilizingSolution);
    }
    Ok(RiccatiSolution::from_matrix(&k))
}

fn newton_refine(
    a: &Matrix2<f64>,
    s: &Matrix2<f64>,
    q: &Matrix2<f64>,
    k0: Matrix2<f64>,
) -> Matrix2<f64> {
    let residual = |k: &Matrix2<f64>| (a.transpose() * k + k * a - k * s * k + q).norm();
    let mut best = k0;
    let mut best_res = residual(&k0);
    let mut k = k0;
    for _ in 0..8 {
        let ac = a - s * k;
        if !is_hurwitz(&ac) {
            break;
        }
        let Some(next) = lyapunov_2x2(&ac, &(q + k * s * k)) else {
            break;
        };
        let res = residual(&next);
        k = next;
        if res < best_res {
            best = next;
            best_res = res;
        } else {
            break;
        }
    }
    best
}

/// Finite-horizon Riccati solution on a uniform grid over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub times: Vec<f64>,
    pub solutions: Vec<RiccatiSolution>,
}

impl GainSchedule {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Linear interpolation, clamped to the grid.
    pub fn solution_at(&self, t: f64) -> RiccatiSolution {
        let n = self.times.len();
        if n == 0 {
            return RiccatiSolution::default();
        }
        if t <= self.times[0] {
            return self.solutions[0];
        }
        if t >= self.times[n - 1] {
            return self.solutions[n - 1];
        }
        let step = self.times[1] - self.times[0];
        let i = (((t - self.times[0]) / step).floor() as usize).min(n - 2);
        let w = ((t - self.times[i]) / step).clamp(0.0, 1.0);
        let (lo, hi) = (self.solutions[i].as_vector(), self.solutions[i + 1].as_vector());
        RiccatiSolution::from_vector(&(lo * (1.0 - w) + hi * w))
    }

    pub fn gains_at(&self, t: f64, alpha: f64) -> GainPair {
        self.solution_at(t).gains(alpha)
    }
}

fn dre_rhs(a: &Matrix2<f64>, s: &Matrix2<f64>, q: &Matrix2<f64>, k: &Vector3<f64>) -> Vector3<f64> {
    let km = Matrix2::new(k[0], k[2], k[2], k[1]);
    let d = -(a.transpose() * km + km * a - km * s * km + q);
    Vector3::new(d[(0, 0)], d[(1, 1)], 0.5 * (d[(0, 1)] + d[(1, 0)]))
}

/// Integrates `K' = -(AᵀK + KA - K·B·Rw⁻¹·Bᵀ·K + Q)` backward from `K(T) = 0`
/// with classical RK4. The grid has `ceil(T/h)` uniform intervals.
pub fn dre_integrate(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    q: &Matrix2<f64>,
    rw: f64,
    horizon: f64,
    h: f64,
) -> Result<GainSchedule> {
    validate_inputs(a, b, q, rw)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
    }
    if !(h > 0.0 && h <= horizon) {
        return Err(Error::InvalidArgument(format!("step must satisfy 0 < h <= T, got {h}")));
    }
    let s = b * b.transpose() / rw;
    let n = ((horizon / h) - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / n as f64;

    let mut ks = vec![Vector3::zeros(); n + 1];
    let mut k = Vector3::zeros();
    for i in (0..n).rev() {
        let k1 = dre_rhs(a, &s, q, &k);
        let k2 = dre_rhs(a, &s, q, &(k - k1 * (0.5 * dt)));
        let k3 = dre_rhs(a, &s, q, &(k - k2 * (0.5 * dt)));
        let k4 = dre_rhs(a, &s, q, &(k - k3 * dt));
        k -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !k.iter().all(|x| x.is_finite() && x.abs() <= 1e9) {
            return Err(Error::StepTooLarge { t: i as f64 * dt });
        }
        ks[i] = k;
    }
    Ok(GainSchedule {
        times: (0..=n).map(|i| i as f64 * dt).collect(),
        solutions: ks.iter().map(RiccatiSolution::from_vector).collect(),
    })
}
