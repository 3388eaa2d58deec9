//! Built-in invariant suite behind `geo-lqr check`.

use geolqr::dynamics::{RigidBodyState, SimParams};
use geolqr::pmp::{
    costate_integrate, shooting_solve, terminal_costate, AvoidanceCost, AvoidanceScenario, BoundaryMode, Point,
    ShootingOptions,
};
use geolqr::regulators::{simulate_regulation, simulate_tracking, ControllerConfig, RegulationGoal, TrackingReference};
use geolqr::riccati::{actuation, are_solve, dre_integrate, scalar_residual, AMatrixMode, CostParams};
use geolqr::so3::{exp_so3, log_so3, InertiaTensor, Rotation};
use nalgebra::{DVector, Matrix2, Vector3};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("check {status} {}: {}", self.name, self.detail)
    }
}

type Outcome = geolqr::Result<(bool, String)>;
type Check = (&'static str, Box<dyn Fn() -> Outcome>);

fn exp_log_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for v in [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1e-9, -2e-9, 0.0),
        Vector3::new(0.9, -0.4, 0.2),
        Vector3::new(-1.2, 2.1, 0.7),
        Vector3::new(0.0, 0.0, 3.0),
    ] {
        let r = exp_so3(&v);
        worst = worst.max((log_so3(&r)? - v).norm()).max(r.orthogonality_defect());
    }
    Ok((worst < 1e-9, format!("max error {worst:.2e}")))
}

fn mode_gains(mode: AMatrixMode, alpha: f64, gamma: f64, expected: (&str, &str)) -> Outcome {
    let g = are_solve(&mode.matrix(gamma), &actuation(), &Matrix2::identity(), alpha)?.gains(alpha);
    let got = (format!("{:.4}", g.kp), format!("{:.4}", g.kd));
    Ok((got.0 == expected.0 && got.1 == expected.1, format!("kP={}, kD={}", got.0, got.1)))
}

fn reconciled_residual() -> Outcome {
    let p = CostParams::new(0.5, 0.0)?;
    let sol = are_solve(&AMatrixMode::Reconciled.matrix(0.0), &actuation(), &p.q_weights, p.alpha)?;
    let r = scalar_residual(&sol, &p).amax();
    Ok((r < 1e-9 && sol.is_positive_definite(), format!("scalar residual {r:.2e}")))
}

fn dre_approaches_are() -> Outcome {
    let a = AMatrixMode::Reconciled.matrix(0.0);
    let q = Matrix2::identity();
    let k_inf = are_solve(&a, &actuation(), &q, 0.5)?.matrix();
    let k0 = dre_integrate(&a, &actuation(), &q, 0.5, 20.0, 1e-3)?.solution_at(0.0).matrix();
    let e = (k0 - k_inf).amax();
    Ok((e < 1e-6, format!("|K(0) - K_are| = {e:.2e} over a 20 s horizon")))
}

fn regulation_converges() -> Outcome {
    let alpha = 0.5;
    let sol = are_solve(&AMatrixMode::PaperRegulation.matrix(0.0), &actuation(), &Matrix2::identity(), alpha)?;
    let p = SimParams::new(1e-3, 20.0, InertiaTensor::spherical())?;
    let init = RigidBodyState::new(exp_so3(&Vector3::new(0.9, -0.4, 0.2)), Vector3::zeros());
    let log = simulate_regulation(init, &RegulationGoal::default(), &sol.gains(alpha), None, &p)?;
    let d = log.channel("dist").and_then(|d| d.last().copied()).unwrap_or(f64::NAN);
    let defect = log.states.iter().map(|s| s.r.orthogonality_defect()).fold(0.0, f64::max);
    Ok((d <= 1e-2 && defect <= 1e-9, format!("d(20) = {d:.2e}, max orthogonality defect {defect:.2e}")))
}

fn tracking_converges() -> Outcome {
    let sol = are_solve(&AMatrixMode::PaperTracking.matrix(-2.0), &actuation(), &Matrix2::identity(), 1.0)?;
    let horizon = 10.0;
    let reference =
        TrackingReference::new([vec![0.0, 0.5], vec![0.0, 0.3], vec![0.0, 0.4]], Rotation::identity(), 1e-3, horizon)?;
    let cfg = ControllerConfig {
        feedforward_accel_term: true,
        ..ControllerConfig::fixed(sol.gains(1.0))
    };
    let p = SimParams::new(1e-3, horizon, InertiaTensor::diagonal([1.0, 2.0, 3.0])?)?;
    let init = RigidBodyState::new(exp_so3(&Vector3::new(0.3, -0.2, 0.1)), Vector3::zeros());
    let log = simulate_tracking(init, &reference, &cfg, &p)?;
    let d = log.channel("dist").and_then(|d| d.last().copied()).unwrap_or(f64::NAN);
    Ok((d <= 1e-3, format!("tracking error at t = {horizon}: {d:.2e}")))
}

fn shooting_first_order() -> Outcome {
    let flat = |x: f64| Point::Flat(DVector::from_element(1, x));
    let s = AvoidanceScenario::new(flat(1.0), DVector::zeros(1), flat(0.0), 1.0, 1.0, vec![])?;
    let sol = shooting_solve(&s, &ShootingOptions::default())?;
    let n = sol.path.len();
    let terminal = terminal_costate(&s, BoundaryMode::Avoidance, &sol.path.q[n - 1], &sol.path.v[n - 1])?;
    let spread = costate_integrate(&sol.path, &AvoidanceCost(&s), &terminal)?.hamiltonian_spread();
    Ok((
        sol.residual <= 1e-6 && spread <= 1e-4,
        format!("residual {:.2e}, Hamiltonian spread {spread:.2e}", sol.residual),
    ))
}

/// Runs every check; a numerical error inside a check counts as a failure.
pub fn run_checks() -> Vec<CheckResult> {
    let checks: [Check; 8] = [
        ("so3_exp_log_round_trip", Box::new(exp_log_round_trip)),
        (
            "regulation_mode_gains",
            Box::new(|| mode_gains(AMatrixMode::PaperRegulation, 0.5, 0.0, ("1.4142", "2.7671"))),
        ),
        (
            "tracking_mode_gains",
            Box::new(|| mode_gains(AMatrixMode::PaperTracking, 1.0, -2.0, ("8.7852", "8.3357"))),
        ),
        ("reconciled_are_residual", Box::new(reconciled_residual)),
        ("dre_approaches_are", Box::new(dre_approaches_are)),
        ("regulation_converges", Box::new(regulation_converges)),
        ("tracking_converges", Box::new(tracking_converges)),
        ("shooting_first_order_conditions", Box::new(shooting_first_order)),
    ];
    checks
        .iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult { name, passed: false, detail: format!("error kind={}: {e}", e.kind()) },
        })
        .collect()
}
