use std::path::Path;
use std::process::{Command, Output};

use geolqr::so3::{exp_so3, orthogonality_defect};
use geolqr_cli::output::COLUMNS;
use geolqr_cli::RunSummary;
use nalgebra::{Matrix3, Vector3};
use serde_json::json;

fn geo_lqr(args: &[&str], config: &serde_json::Value, dir: &Path) -> Output {
    let path = dir.join("scenario.json");
    std::fs::write(&path, config.to_string()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_geo-lqr"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap()
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8(out.stdout.clone()).unwrap().lines().map(str::to_string).collect()
}

fn summary(out: &Output) -> RunSummary {
    serde_json::from_str(stdout_lines(out).last().unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn rotation_rows(v: [f64; 3]) -> Vec<f64> {
    exp_so3(&Vector3::from(v)).to_row_major().to_vec()
}

fn regulate_config() -> serde_json::Value {
    json!({
        "command": "regulate",
        "cost": {"alpha": 0.5, "a_matrix": "paper-regulation"},
        "initial": {"rotation": rotation_rows([0.9, -0.4, 0.2])},
        "goal": {"rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1]}
    })
}

#[test]
fn gains_match_target_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = geo_lqr(&["gains"], &json!({"cost": {"alpha": 0.5, "a_matrix": "paper-regulation"}}), dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout_lines(&out)[0], "kP=1.4142, kD=2.7671");

    let cfg = json!({"cost": {"alpha": 1.0, "gamma": -2.0, "a_matrix": "paper-tracking"}});
    let out = geo_lqr(&["gains"], &cfg, dir.path());
    assert!(out.status.success());
    assert_eq!(stdout_lines(&out)[0], "kP=8.7852, kD=8.3357");
    let s = summary(&out);
    assert_eq!(s.a_matrix.as_deref(), Some("paper-tracking"));
    assert!((s.gains.unwrap().kp - 8.78515).abs() < 1e-5);
}

#[test]
fn regulate_writes_the_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = geo_lqr(&["regulate", "--out", out_dir.to_str().unwrap()], &regulate_config(), dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let s = summary(&out);
    assert!(s.final_distance.unwrap() <= 1e-2, "{s:?}");
    assert_eq!(s.command, geolqr_cli::CommandKind::Regulate);

    let file: RunSummary = serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(file, s);

    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 20000 steps give 20001 samples; every tenth plus the last
    assert_eq!(rows.len(), 2001);
    assert_eq!(s.rows_written, Some(2001));
    for row in &rows {
        assert_eq!(row.len(), 20);
        let r: Vec<f64> = row[1..10].iter().map(|x| x.parse().unwrap()).collect();
        assert!(orthogonality_defect(&Matrix3::from_row_slice(&r)) <= 1e-9);
        for cell in &row[..19] {
            let digits = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(digits.len(), 17, "{cell}");
        }
        assert_eq!(row[19], "", "hamiltonian is undefined for regulation");
    }
    let t_last: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert!((t_last - 20.0).abs() < 1e-9);
    let d_last: f64 = rows.last().unwrap()[16].parse().unwrap();
    assert_eq!(d_last, s.final_distance.unwrap());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = regulate_config();
    cfg["sim"] = json!({"t_end": 3.0});
    cfg["output"] = json!({"decimation": 1});
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("run{k}"));
        let out = geo_lqr(&["regulate", "--out", out_dir.to_str().unwrap()], &cfg, dir.path());
        assert!(out.status.success());
        outputs.push(std::fs::read(out_dir.join("trajectory.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 3002);
}

#[test]
fn config_errors_exit_with_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = regulate_config();
    cfg["initial"]["rotation"] = json!([1, 0, 0, 0, 1, 0, 0, 0, 0.9]);
    let out = geo_lqr(&["regulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=validation_error field=initial.rotation "), "{err}");
    assert!(out.stdout.is_empty());

    let mut cfg = regulate_config();
    cfg["plot"] = json!(true);
    let out = geo_lqr(&["regulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error kind=parse_error"));

    let out = geo_lqr(&["track"], &regulate_config(), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("field=command"));
}

#[test]
fn start_near_cut_locus_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = regulate_config();
    cfg["initial"]["rotation"] = json!(rotation_rows([0.0, 0.0, 3.1]));
    let out = geo_lqr(&["regulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=angle_near_pi "), "{err}");
}

#[test]
fn track_with_scheduled_gains() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = json!({
        "command": "track",
        "cost": {"alpha": 1.0, "gamma": -2.0, "a_matrix": "paper-tracking"},
        "sim": {"t_end": 12.0},
        "inertia": [[1, 0, 0], [0, 2, 0], [0, 0, 3]],
        "initial": {"rotation": rotation_rows([0.3, -0.2, 0.1]), "omega": [0.1, 0.0, -0.1]},
        "reference": {"omega_ref": [[0, 0.5], [0, 0.3], [0, 0.4]]},
        "controller": {"gain_source": "dre", "feedforward_accel_term": true}
    });
    let mut runs = Vec::new();
    for source in ["dre", "are"] {
        cfg["controller"]["gain_source"] = json!(source);
        let out_dir = dir.path().join(source);
        let out = geo_lqr(&["track", "--out", out_dir.to_str().unwrap()], &cfg, dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
        let s = summary(&out);
        assert_eq!(s.gain_source.as_deref(), Some(source));
        let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
        let rows: Vec<Vec<String>> =
            csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
        assert!(rows.iter().all(|r| !r[16].is_empty() && r[17..].iter().all(|c| c.is_empty())));
        let dist: Vec<f64> = rows.iter().map(|r| r[16].parse().unwrap()).collect();
        runs.push((s, dist));
    }
    let (dre, are) = (&runs[0], &runs[1]);
    // far from the horizon the schedule sits on the stationary solution
    assert!((dre.1[800] / are.1[800] - 1.0).abs() < 1e-4);
    assert!(dre.1[800] < 1e-3, "{}", dre.1[800]);
    // K(T) = 0 relaxes the gains at the end
    assert!(dre.0.final_distance.unwrap() > are.0.final_distance.unwrap());
}

#[test]
fn avoid_reports_clearance_and_hamiltonian() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "avoid",
        "cost": {"alpha": 1.0},
        "avoidance": {
            "dimension": 2, "q0": [0, 0], "target": [2, 0], "horizon": 2,
            "obstacles": [{"center": [1, 0.05], "radius": 0.3}]
        }
    });
    let out_dir = dir.path().join("avoid");
    let out = geo_lqr(&["avoid", "--out", out_dir.to_str().unwrap()], &cfg, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let s = summary(&out);
    assert!(s.min_clearance.unwrap() > 0.0);
    assert!(s.residual.unwrap() <= 1e-6);
    assert!(s.hamiltonian_spread.unwrap() < 1e-2, "{s:?}");
    assert!(s.iterations.is_some());

    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(row[1..10].iter().all(|c| c.is_empty()));
    assert!(row[12].is_empty() && row[15].is_empty(), "third velocity and control slots are padding");
    assert!(!row[19].is_empty());
    let q = std::fs::read_to_string(out_dir.join("configuration.csv")).unwrap();
    assert_eq!(q.lines().next().unwrap(), "t,q1,q2");
    assert_eq!(q.lines().count(), csv.lines().count());
}

#[test]
fn avoid_on_so3_fills_rotation_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "cost": {"alpha": 0.5},
        "avoidance": {
            "manifold": "so3", "dimension": 3, "mode": "regulation",
            "q0": [0.4, 0.1, -0.3], "v0": [0.0, -0.2, 0.1], "target": [0, 0, 0], "horizon": 2
        }
    });
    let out_dir = dir.path().join("so3");
    let out = geo_lqr(&["avoid", "--out", out_dir.to_str().unwrap()], &cfg, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(summary(&out).min_clearance, None);
    assert!(!out_dir.join("configuration.csv").exists());
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let r: Vec<f64> = line.split(',').skip(1).take(9).map(|x| x.parse().unwrap()).collect();
        assert!(orthogonality_defect(&Matrix3::from_row_slice(&r)) <= 1e-9);
    }
}

#[test]
fn check_passes_without_config() {
    let out = Command::new(env!("CARGO_BIN_EXE_geo-lqr")).arg("check").output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = stdout_lines(&out);
    assert!(lines[..lines.len() - 1].iter().all(|l| l.starts_with("check PASS ")));
    let s = summary(&out);
    assert_eq!(s.checks_failed, Some(0));
    assert_eq!(s.checks_passed, Some(lines.len() - 1));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_geo-lqr")).arg("regulate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("field=--config"));
}

#[test]
fn shipped_scenarios_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = geolqr_cli::parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let cmd = cfg.command.expect("scenarios name their command");
        cfg.require(cmd).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 6);
}
