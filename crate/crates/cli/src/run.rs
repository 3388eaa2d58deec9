use std::path::Path;
use std::time::Instant;

use geolqr::dynamics::{RigidBodyState, TrajectoryLog};
use geolqr::pmp::{
    costate_integrate, shooting_solve, terminal_costate, AvoidanceCost, BoundaryMode, ControlEffort, RunningCost,
    ShootingOptions,
};
use geolqr::regulators::{simulate_regulation, simulate_tracking, ControllerConfig, GainSource};
use geolqr::riccati::{actuation, are_solve, dre_integrate, GainPair, RiccatiSolution};

use crate::check::run_checks;
use crate::config::{CommandKind, GainSourceKind, Manifold, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, Gains, RunSummary, COLUMNS};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONFIGURATION_FILE: &str = "configuration.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Human-readable lines plus the summary of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub lines: Vec<String>,
    pub summary: RunSummary,
}

fn gains(g: &GainPair) -> Gains {
    Gains { kp: g.kp, kd: g.kd }
}

fn k_array(k: &RiccatiSolution) -> [f64; 3] {
    [k.k1, k.k2, k.k3]
}

fn are_gains(cfg: &ScenarioConfig, summary: &mut RunSummary) -> CliResult<(RiccatiSolution, GainPair)> {
    let (p, mode) = cfg.cost_spec()?;
    let sol = are_solve(&mode.matrix(p.gamma), &actuation(), &p.q_weights, p.alpha)?;
    let g = sol.gains(p.alpha);
    summary.a_matrix = Some(mode.name().to_string());
    summary.gain_source = Some("are".into());
    summary.gains = Some(gains(&g));
    summary.riccati = Some(k_array(&sol));
    Ok((sol, g))
}

fn rigid_body_row(log: &TrajectoryLog<RigidBodyState>, i: usize, channels: [Option<&[f64]>; 4]) -> Vec<Option<f64>> {
    let s = &log.states[i];
    let tau = &log.controls[i];
    let mut row = Vec::with_capacity(COLUMNS.len());
    row.push(Some(log.times[i]));
    row.extend(s.r.to_row_major().map(Some));
    row.extend(s.w.iter().map(|&x| Some(x)));
    row.extend(tau.iter().map(|&x| Some(x)));
    row.extend(channels.map(|c| c.map(|c| c[i])));
    row
}

fn finish_rigid_body(log: &TrajectoryLog<RigidBodyState>, summary: &mut RunSummary) {
    summary.final_distance = log.channel("dist").and_then(|d| d.last().copied());
    summary.final_velocity_norm = log.last_state().map(|s| s.w.norm());
}

fn regulate(cfg: &ScenarioConfig, dir: Option<&Path>, summary: &mut RunSummary) -> CliResult<()> {
    let (sol, g) = are_gains(cfg, summary)?;
    let alpha = cfg.cost_spec()?.0.alpha;
    let init = cfg.initial.ok_or_else(|| CliError::validation("initial", "required"))?;
    let log = simulate_regulation(init, &cfg.goal, &g, Some((&sol, alpha)), &cfg.sim)?;
    finish_rigid_body(&log, summary);
    if let Some(dir) = dir {
        let channels = [log.channel("dist"), log.channel("lyap"), log.channel("value"), None];
        let rows = write_csv(&dir.join(TRAJECTORY_FILE), &COLUMNS, log.len(), cfg.output.decimation, |i| {
            Ok(rigid_body_row(&log, i, channels))
        })?;
        summary.rows_written = Some(rows);
    }
    Ok(())
}

fn track(cfg: &ScenarioConfig, dir: Option<&Path>, summary: &mut RunSummary) -> CliResult<()> {
    let (p, mode) = cfg.cost_spec()?;
    let spec = cfg.reference.as_ref().ok_or_else(|| CliError::validation("reference", "required"))?;
    let init = cfg.initial.ok_or_else(|| CliError::validation("initial", "required"))?;
    let source = match cfg.controller.gain_source {
        GainSourceKind::Are => GainSource::Static(are_gains(cfg, summary)?.1),
        GainSourceKind::Dre => {
            let a = mode.matrix(p.gamma);
            let schedule = dre_integrate(&a, &actuation(), &p.q_weights, p.alpha, cfg.sim.t_end, cfg.sim.h)?;
            let k0 = schedule.solution_at(0.0);
            summary.a_matrix = Some(mode.name().to_string());
            summary.gain_source = Some("dre".into());
            summary.gains = Some(gains(&k0.gains(p.alpha)));
            summary.riccati = Some(k_array(&k0));
            GainSource::Scheduled { schedule, alpha: p.alpha }
        }
    };
    let reference = spec.build(cfg.sim.h, cfg.sim.t_end)?;
    let controller = ControllerConfig {
        gains: source,
        feedforward_accel_term: cfg.controller.feedforward_accel_term,
    };
    let log = simulate_tracking(init, &reference, &controller, &cfg.sim)?;
    finish_rigid_body(&log, summary);
    if let Some(dir) = dir {
        let channels = [log.channel("dist"), None, None, None];
        let rows = write_csv(&dir.join(TRAJECTORY_FILE), &COLUMNS, log.len(), cfg.output.decimation, |i| {
            Ok(rigid_body_row(&log, i, channels))
        })?;
        summary.rows_written = Some(rows);
    }
    Ok(())
}

fn avoid(cfg: &ScenarioConfig, dir: Option<&Path>, summary: &mut RunSummary) -> CliResult<()> {
    let spec = cfg.avoidance.as_ref().ok_or_else(|| CliError::validation("avoidance", "required"))?;
    let s = &spec.scenario;
    let opts = ShootingOptions {
        mode: spec.mode,
        h: cfg.sim.h,
        ..Default::default()
    };
    let sol = shooting_solve(s, &opts)?;
    let path = &sol.path;
    let n = path.len();
    let (q_t, v_t) = (&path.q[n - 1], &path.v[n - 1]);
    let terminal = terminal_costate(s, spec.mode, q_t, v_t)?;
    let effort = ControlEffort { alpha: s.alpha };
    let avoidance = AvoidanceCost(s);
    let cost: &dyn RunningCost = match spec.mode {
        BoundaryMode::Avoidance => &avoidance,
        BoundaryMode::Regulation => &effort,
    };
    let costates = costate_integrate(path, cost, &terminal)?;
    let dist = path.q.iter().map(|q| Ok(q.log_to(&s.target)?.norm())).collect::<geolqr::Result<Vec<_>>>()?;
    let mut clearance = f64::INFINITY;
    for q in &path.q {
        clearance = clearance.min(s.clearance(q)?);
    }

    summary.final_distance = dist.last().copied();
    summary.final_velocity_norm = Some(v_t.norm());
    summary.min_clearance = clearance.is_finite().then_some(clearance);
    summary.iterations = Some(sol.iterations);
    summary.residual = Some(sol.residual);
    summary.cost = Some(sol.cost);
    summary.hamiltonian_spread = Some(costates.hamiltonian_spread());

    if let Some(dir) = dir {
        let pad = |x: &nalgebra::DVector<f64>| -> [Option<f64>; 3] { std::array::from_fn(|k| x.get(k).copied()) };
        let rows = write_csv(&dir.join(TRAJECTORY_FILE), &COLUMNS, n, cfg.output.decimation, |i| {
            let mut row = vec![Some(path.times[i])];
            match path.q[i].as_rotation() {
                Some(r) => row.extend(r.to_row_major().map(Some)),
                None => row.extend([None; 9]),
            }
            row.extend(pad(&path.v[i]));
            row.extend(pad(&path.u[i]));
            row.extend([Some(dist[i]), None, None, Some(costates.hamiltonian[i])]);
            Ok(row)
        })?;
        summary.rows_written = Some(rows);
        if spec.manifold == Manifold::Flat {
            let header: Vec<String> =
                std::iter::once("t".to_string()).chain((1..=s.dim()).map(|k| format!("q{k}"))).collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(&dir.join(CONFIGURATION_FILE), &header, n, cfg.output.decimation, |i| {
                let q = path.q[i].as_flat().expect("flat scenario");
                Ok(std::iter::once(Some(path.times[i])).chain(q.iter().map(|&x| Some(x))).collect())
            })?;
        }
    }
    Ok(())
}

/// Runs `cmd` against a validated config. Files go to `out_dir`, falling
/// back to `output.dir` from the config; with neither, nothing is written.
pub fn run(cfg: &ScenarioConfig, cmd: CommandKind, out_dir: Option<&Path>) -> CliResult<RunOutput> {
    let start = Instant::now();
    cfg.require(cmd)?;
    let dir = out_dir.or(cfg.output.dir.as_deref());
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let mut summary = RunSummary::empty(cmd);
    let mut lines = Vec::new();
    match cmd {
        CommandKind::Gains => {
            let (_, g) = are_gains(cfg, &mut summary)?;
            lines.push(format!("kP={:.4}, kD={:.4}", g.kp, g.kd));
        }
        CommandKind::Regulate => regulate(cfg, dir, &mut summary)?,
        CommandKind::Track => track(cfg, dir, &mut summary)?,
        CommandKind::Avoid => avoid(cfg, dir, &mut summary)?,
        CommandKind::Check => return run_check(dir),
    }
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    finish(summary, lines, dir)
}

/// The built-in invariant suite. Failures are reported in the summary;
/// see [`RunOutput::status`].
pub fn run_check(dir: Option<&Path>) -> CliResult<RunOutput> {
    let start = Instant::now();
    let results = run_checks();
    let failed = results.iter().filter(|r| !r.passed).count();
    let lines = results.iter().map(|r| r.line()).collect();
    let mut summary = RunSummary::empty(CommandKind::Check);
    summary.checks_passed = Some(results.len() - failed);
    summary.checks_failed = Some(failed);
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    finish(summary, lines, dir)
}

impl RunOutput {
    /// `CheckFailed` when the summary records failed checks.
    pub fn status(&self) -> CliResult<()> {
        match self.summary.checks_failed {
            Some(failed) if failed > 0 => Err(CliError::CheckFailed { failed }),
            _ => Ok(()),
        }
    }
}

fn finish(summary: RunSummary, lines: Vec<String>, dir: Option<&Path>) -> CliResult<RunOutput> {
    if !summary.is_finite() {
        return Err(geolqr::Error::NumericalDivergence { t: f64::NAN, norm: f64::NAN }.into());
    }
    if let Some(d) = dir {
        let path = d.join(SUMMARY_FILE);
        std::fs::write(&path, summary.to_json() + "\n").map_err(|e| CliError::io(&path, e))?;
    }
    Ok(RunOutput { lines, summary })
}
