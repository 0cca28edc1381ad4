use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use rtr_service::cli::{run, EXIT_OK, EXIT_SCRIPT, EXIT_SERVICE, EXIT_VALIDATION};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/examples/configs")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn rtr(args: &[&str]) -> i32 {
    run(std::iter::once("rtr").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn workspace_clouds_nest_through_compare() {
    let dir = tempfile::tempdir().unwrap();
    let fig5 = cfg("fig5_planar6.json");
    let mut files = Vec::new();
    for (mode, seg) in [("tdr", "2"), ("tdr", "3"), ("rtr", "0")] {
        let out = dir.path().join(format!("{mode}{seg}.csv"));
        let code = rtr(&["workspace", "--config", &fig5, "--mode", mode, "--segments", seg, "--resolution-deg", "6", "--out", s(&out)]);
        assert_eq!(code, EXIT_OK);
        files.push(out);
    }
    assert!(std::fs::read_to_string(&files[0]).unwrap().starts_with("x_mm,y_mm\n"));
    for w in files.windows(2) {
        let out = Command::new(env!("CARGO_BIN_EXE_rtr"))
            .args(["compare", "--inner", s(&w[0]), "--outer", s(&w[1])])
            .output()
            .unwrap();
        assert!(out.status.success());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["contained_fraction"], 1.0);
    }
}

#[test]
fn one_joint_workspace_is_an_arc() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("one.json");
    std::fs::write(&conf, r#"{"n_joints": 1, "axes": ["X"]}"#).unwrap();
    let out = dir.path().join("arc.csv");
    assert_eq!(rtr(&["workspace", "--config", s(&conf), "--resolution-deg", "1", "--out", s(&out)]), EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut n = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[0].hypot(v[1]) - 10.0).abs() < 1e-9);
        n += 1;
    }
    assert!(n > 20);
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.json");
    std::fs::write(&conf, r#"{"n_joints": 0}"#).unwrap();
    assert_eq!(rtr(&["workspace", "--config", s(&conf)]), EXIT_VALIDATION);
    assert_eq!(rtr(&["workspace", "--config", "/nonexistent.json"]), EXIT_VALIDATION);
    assert_eq!(rtr(&["workspace", "--resolution-deg", "abc"]), EXIT_VALIDATION);
    assert_eq!(rtr(&["frobnicate"]), EXIT_VALIDATION);
}

#[test]
fn dexterity_map_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let conf = cfg("fig5_planar6.json");
    let one = dir.path().join("one.csv");
    assert_eq!(rtr(&["dexterity", "--config", &conf, "--target", "30,20", "--samples", "1", "--out", s(&one)]), EXIT_OK);
    let text = std::fs::read_to_string(&one).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("f1,f2,f3,dp_percent\n"));

    let map = dir.path().join("map.csv");
    assert_eq!(rtr(&["dexterity", "--config", &conf, "--target", "30,20", "--samples", "2000", "--out", s(&map)]), EXIT_OK);
    let first = std::fs::read(&map).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 2001);
    assert_eq!(rtr(&["dexterity", "--config", &conf, "--target", "30,20", "--samples", "2000", "--out", s(&map)]), EXIT_OK);
    assert_eq!(std::fs::read(&map).unwrap(), first);

    let table = dir.path().join("table.csv");
    let code = rtr(&["dexterity", "--config", &conf, "--target", "30,20", "--divisions", "3,4,5,6", "--samples", "200", "--out", s(&table)]);
    assert_eq!(code, EXIT_OK);
    let text = std::fs::read_to_string(&table).unwrap();
    let dps: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(dps.len(), 4);
    assert!(dps.windows(2).all(|w| w[0] <= w[1]), "{dps:?}");

    let far = dir.path().join("far.csv");
    assert_eq!(rtr(&["dexterity", "--config", &conf, "--target", "500,0", "--samples", "5", "--out", s(&far)]), EXIT_OK);
    let text = std::fs::read_to_string(&far).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
}

fn statics_json(args: &[&str]) -> (i32, Option<Value>) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    let mut full = vec!["statics", "--out", s(&out)];
    full.extend_from_slice(args);
    let code = rtr(&full);
    let v = std::fs::read_to_string(&out).ok().map(|t| serde_json::from_str(&t).unwrap());
    (code, v)
}

#[test]
fn statics_table_four_row_converges() {
    let (code, v) = statics_json(&[
        "--lock", "1:0,2:0,3:0,4:0", "--tensions", "0.98,0,0,0", "--payload", "0.0196", "--mu", "0.085",
    ]);
    assert_eq!(code, EXIT_OK);
    let v = v.unwrap();
    assert!(v["max_residual_nmm"].as_f64().unwrap() <= 1e-8);
    assert!(v["payload_error_rad"].as_f64().unwrap() <= 1e-6);
    assert!(v["theta_fe_deg"].is_number());
    let a = v["angles_deg"].as_array().unwrap();
    assert!(a[..4].iter().all(|x| x == 0.0));
    assert!(a[4..].iter().any(|x| x.as_f64().unwrap() != 0.0));
}

#[test]
fn statics_zero_input_is_straight_and_sweep_is_monotone() {
    let (code, v) = statics_json(&[]);
    assert_eq!(code, EXIT_OK);
    assert!(v.unwrap()["angles_deg"].as_array().unwrap().iter().all(|x| x == 0.0));

    let conf = cfg("planar3.json");
    let mut last = 0.0;
    for f2 in ["0.1", "0.3", "0.6", "1.0"] {
        let t = format!("0,{f2},0,0");
        let (code, v) = statics_json(&["--config", &conf, "--tensions", &t]);
        assert_eq!(code, EXIT_OK);
        let tip = v.unwrap()["tip_mm"][1].as_f64().unwrap().abs();
        assert!(tip > last);
        last = tip;
    }
    let (code, _) = statics_json(&["--tensions", "1,2"]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn simulate_presets_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"steps": []}"#).unwrap();
    let out = dir.path().join("traj.csv");
    assert_eq!(rtr(&["simulate", "--script", s(&empty), "--out", s(&out)]), EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("step,joint,angle_deg\n"));
    assert_eq!(text.lines().count(), 1 + 7);

    let trace = dir.path().join("trace.jsonl");
    let code = rtr(&["simulate", "--script", "preset:contract-swing-extend", "--out", s(&out), "--trace", s(&trace)]);
    assert_eq!(code, EXIT_OK);
    let first = std::fs::read(&out).unwrap();
    assert!(std::fs::read_to_string(&trace).unwrap().lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
    let file = configs().join("../scripts/contract-swing-extend.json");
    assert_eq!(rtr(&["simulate", "--script", s(&file), "--out", s(&out)]), EXIT_OK);
    assert_eq!(std::fs::read(&out).unwrap(), first);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"steps": [{"tendon": {"group_x_mm": 69}}, {"tendon": {"group_x_mm": 1}}]}"#).unwrap();
    let json_out = dir.path().join("traj.json");
    assert_eq!(rtr(&["simulate", "--script", s(&bad), "--format", "json", "--out", s(&json_out)]), EXIT_SCRIPT);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(v["complete"], false);
    assert_eq!(v["failed_step"], 2);
    assert_eq!(v["steps"].as_array().unwrap().len(), 2);

    assert_eq!(rtr(&["simulate", "--script", "preset:nothing"]), EXIT_SCRIPT);
    assert_eq!(rtr(&["simulate", "--script", "/missing.json"]), EXIT_SCRIPT);
}

#[test]
fn serve_prints_its_address_and_rejects_a_taken_port() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_rtr"))
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_owned();
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.to_ascii_lowercase().contains("rtr-api-version: 1"));

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let status = Command::new(env!("CARGO_BIN_EXE_rtr"))
        .args(["serve", "--port", &port])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_SERVICE));
}
