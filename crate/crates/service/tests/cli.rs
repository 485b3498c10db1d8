//! The `twin-teleop` binary end to end.

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twin-teleop"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn schedule_is_deterministic_csv() {
    let a = run(&["schedule", "--seed", "42", "--horizon", "60"]).stdout;
    let b = run(&["schedule", "--seed", "42", "--horizon", "60"]).stdout;
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("start,end,status"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() > 2);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows.last().unwrap()[1].parse::<f64>().unwrap(), 60.0);
    assert!(rows.iter().all(|r| r[2] == "up" || r[2] == "down"));
    assert_ne!(text, String::from_utf8(run(&["schedule", "--seed", "43", "--horizon", "60"]).stdout).unwrap());
}

#[test]
fn register_recovers_translation() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("mx,my,mz,rx,ry,rz\n");
    for p in [[0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.0, 0.04, 0.0], [0.0, 0.0, 0.03], [0.02, 0.03, 0.01]] {
        csv += &format!("{},{},{},{},{},{}\n", p[0], p[1], p[2], p[0] + 0.1, p[1] - 0.2, p[2] + 0.3);
    }
    let path = write(dir.path(), "pairs.csv", &csv);
    let out: serde_json::Value = serde_json::from_slice(&run(&["register", "--pairs", &path]).stdout).unwrap();
    let t = &out["transform"]["translation"];
    assert!((t["x"].as_f64().unwrap() - 0.1).abs() < 1e-9);
    assert!((t["y"].as_f64().unwrap() + 0.2).abs() < 1e-9);
    assert!((t["z"].as_f64().unwrap() - 0.3).abs() < 1e-9);
    assert!(out["fre_rms"].as_f64().unwrap() < 1e-9);
    assert_eq!(out["transform"]["from_frame"], "environment");
}

#[test]
fn register_rejects_collinear_points() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "pairs.csv", "mx,my,mz,rx,ry,rz\n0,0,0,0,0,0\n1,0,0,1,0,0\n2,0,0,2,0,0\n");
    let out = bin().args(["register", "--pairs", &path]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn trial_and_experiment_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "trial.toml",
        "strategy = \"baseline\"\n[operator]\nmax_speed = 0.1\n[channel]\nkind = \"stochastic\"\n",
    );
    let m: serde_json::Value = serde_json::from_slice(&run(&["trial", "--config", &cfg, "--seed", "5"]).stdout).unwrap();
    assert_eq!(m["completed"], true);
    assert!(m["completion_time"].as_f64().unwrap() > 0.0);

    let out = dir.path().join("exp");
    let out_s = out.to_str().unwrap();
    run(&["experiment", "--config", &cfg, "--trials", "3", "--out", out_s]);
    let csv1 = std::fs::read(out.join("trials.csv")).unwrap();
    run(&["experiment", "--config", &cfg, "--trials", "3", "--out", out_s]);
    assert_eq!(csv1, std::fs::read(out.join("trials.csv")).unwrap());
    let header = String::from_utf8(csv1).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("arm,trial,strategy,seed,completed,completion_time"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_trials"], 3);
    assert_eq!(report["config"]["operator"]["max_speed"], 0.1);
    assert!(report["comparison"]["reduction"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "max_duration = -1.0\n");
    let out = bin().args(["trial", "--config", &cfg]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_duration"));
}

#[test]
fn serve_honours_bind_env_var() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = bin()
        .arg("serve")
        .env("TWIN_TELEOP_BIND", format!("127.0.0.1:{port}"))
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    let mut ok = false;
    while Instant::now() < deadline {
        if let Ok(mut s) = std::net::TcpStream::connect(("127.0.0.1", port)) {
            use std::io::{Read, Write};
            s.write_all(b"GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
            let mut resp = String::new();
            s.read_to_string(&mut resp).unwrap();
            ok = resp.starts_with("HTTP/1.1 200") && resp.ends_with("ok");
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    child.kill().unwrap();
    let _ = child.wait();
    assert!(line.contains(&port.to_string()), "{line}");
    assert!(ok);
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut session = twin_teleop_service::SessionConfig::from_path(root.join("session.toml")).unwrap();
    let default = twin_teleop_service::SessionConfig::default();
    assert!(session.camera.extrinsic.rotation.angle_to(&default.camera.extrinsic.rotation) < 1e-12);
    session.camera.extrinsic.rotation = default.camera.extrinsic.rotation;
    assert_eq!(session, default);
    let trial = twin_teleop::TrialConfig::from_path(root.join("trial.toml")).unwrap();
    assert_eq!(trial, twin_teleop::TrialConfig::default());
    let out: serde_json::Value =
        serde_json::from_slice(&run(&["register", "--pairs", root.join("pairs.csv").to_str().unwrap()]).stdout).unwrap();
    assert!(out["fre_rms"].as_f64().unwrap() < 1e-9);
}
