mod common;

use axum::http::StatusCode;
use common::Client;
use rtr_core::sequencer::presets;
use rtr_service::api::ServiceOptions;
use serde_json::{json, Value};

fn without_revision(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("revision");
    v
}

#[tokio::test]
async fn health_and_create() {
    let c = Client::new();
    let (s, v) = c.call("GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");

    let (s, v) = c.call("POST", "/sessions", Some(json!({}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["config"]["n_joints"], 7);
    assert!(v["angles_deg"].as_array().unwrap().iter().all(|a| a == 0.0));
    assert!(v["joints"].as_array().unwrap().iter().all(|j| j["locked"] == false));
    assert_eq!(v["tip_mm"], json!([0.0, 0.0, 70.0]));
    let other = c.create(json!({})).await;
    assert_ne!(v["id"].as_str().unwrap(), other);

    let (s, v) = c.call("POST", "/sessions", Some(json!({ "config": { "n_joints": 0 } }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, _) = c.call("POST", "/sessions", Some(json!({ "locked": [{ "joint": 9, "angle_deg": 0 }] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = c.call("GET", "/sessions/nope/state", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn lock_endpoint_returns_the_device_trace() {
    let c = Client::new();
    let id = c.create(json!({})).await;
    let (s, v) = c.call("POST", &format!("/sessions/{id}/joints/3/lock"), None).await;
    assert_eq!(s, StatusCode::OK);
    let events: Vec<&str> = v["trace"].as_array().unwrap().iter().map(|r| r["event"].as_str().unwrap()).collect();
    assert_eq!(events, ["select", "engage", "wind", "switch_closed", "state_change", "release"]);
    assert_eq!(v["trace"][0]["joint"], 3);
    assert_eq!(v["state"]["joints"][2]["locked"], true);
    assert_eq!(c.state(&id).await["joints"][2]["locked"], true);

    let (s, v) = c.call("POST", &format!("/sessions/{id}/joints/3/lock"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["trace"], json!([]));
    let (s, _) = c.call("POST", &format!("/sessions/{id}/joints/99/lock"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = c.call("POST", &format!("/sessions/{id}/joints/0/unlock"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = c.call("POST", &format!("/sessions/{id}/joints/3/unlock"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state"]["joints"][2]["locked"], false);
}

#[tokio::test]
async fn steps_follow_table_two_case_two_and_roll_back_on_failure() {
    let c = Client::new();
    let id = c.create(json!({})).await;
    let script = serde_json::to_value(presets::table_two(2).unwrap()).unwrap();
    let mut last = Value::Null;
    for step in script["steps"].as_array().unwrap() {
        let (s, v) = c.call("POST", &format!("/sessions/{id}/steps"), Some(step.clone())).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        last = v;
    }
    let a = last["angles_deg"].as_array().unwrap();
    assert!((a[6].as_f64().unwrap() - a[0].as_f64().unwrap()).abs() < 1e-9);
    assert!((a[0].as_f64().unwrap() - presets::TABLE_TWO_FREE_DEG).abs() < 1e-6);
    assert_eq!(last["diagnostics"]["solver"], "constant_curvature");
    assert_eq!(last["entry"], 2);

    let before = c.state(&id).await;
    let history_before = c.call("GET", &format!("/sessions/{id}/history"), None).await.1;
    let (s, v) = c
        .call(
            "POST",
            &format!("/sessions/{id}/steps"),
            Some(json!({ "unlock": [3], "tendon": { "group_x_mm": 1.0 }, "lock": [{ "joint": 1 }] })),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(c.state(&id).await, before);
    assert_eq!(c.call("GET", &format!("/sessions/{id}/history"), None).await.1, history_before);

    let (s, _) = c.call("POST", &format!("/sessions/{id}/steps"), Some(json!({ "unlock": [1] }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = c.call("POST", &format!("/sessions/{id}/steps"), Some(json!({ "unlock": "x" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(c.state(&id).await, before);

    // a neutral step leaves the posture alone
    let (s, v) = c.call("POST", &format!("/sessions/{id}/steps"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["angles_deg"], before["angles_deg"]);
}

#[tokio::test]
async fn workspace_overlay_follows_the_lock_pattern() {
    let c = Client::new();
    let locked: Vec<Value> = (1..=7).map(|j| json!({ "joint": j, "angle_deg": if j == 3 { 10.0 } else { 0.0 } })).collect();
    let id = c.create(json!({ "locked": locked })).await;
    let tip = c.state(&id).await["tip_mm"].clone();
    let (s, v) = c.call("GET", &format!("/sessions/{id}/workspace"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["total_points"], 1);
    assert_eq!(v["points_mm"][0], tip);

    c.call("POST", &format!("/sessions/{id}/joints/7/unlock"), None).await;
    let (s, v) = c.call("GET", &format!("/sessions/{id}/workspace?resolution_deg=2"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["free_joints"], json!([7]));
    let pts: Vec<[f64; 3]> = serde_json::from_value(v["points_mm"].clone()).unwrap();
    assert!(pts.len() > 20);
    // arc about joint 7's pivot through the current tip
    let st = c.state(&id).await;
    let pivot: [f64; 3] = serde_json::from_value(st["backbone_mm"][6].clone()).unwrap();
    let tip: [f64; 3] = serde_json::from_value(st["tip_mm"].clone()).unwrap();
    let r = |p: &[f64; 3]| ((p[0] - pivot[0]).powi(2) + (p[1] - pivot[1]).powi(2) + (p[2] - pivot[2]).powi(2)).sqrt();
    let r0 = r(&tip);
    assert!(pts.iter().all(|p| (r(p) - r0).abs() < 1e-9));
    assert!(pts.iter().any(|p| p == &tip));

    let (s, v) = c.call("GET", &format!("/sessions/{id}/workspace?frozen=none&resolution_deg=1"), None).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE, "{v}");
    let (s, v) = c.call("GET", &format!("/sessions/{id}/workspace?frozen=none&resolution_deg=30"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["returned_points"].as_u64().unwrap() <= 5000);
    assert_eq!(v["free_joints"], json!([1, 2, 3, 4, 5, 6, 7]));
    let (s, _) = c.call("GET", &format!("/sessions/{id}/workspace?frozen=sometimes"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn history_and_replay_are_deterministic() {
    let c = Client::new();
    let id = c.create(json!({})).await;
    let initial = c.state(&id).await;
    let script = serde_json::to_value(presets::contract_swing_extend()).unwrap();
    for step in script["steps"].as_array().unwrap() {
        let (s, _) = c.call("POST", &format!("/sessions/{id}/steps"), Some(step.clone())).await;
        assert_eq!(s, StatusCode::OK);
    }
    let full = c.state(&id).await;
    let (_, h) = c.call("GET", &format!("/sessions/{id}/history"), None).await;
    let n = h["step_count"].as_u64().unwrap();
    assert_eq!(n as usize, script["steps"].as_array().unwrap().len());
    assert_eq!(h["entries"][0]["action"]["kind"], "step");

    let (s, v) = c.call("POST", &format!("/sessions/{id}/replay"), Some(json!({ "prefix": n }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(without_revision(v), without_revision(full.clone()));
    assert!(c.state(&id).await["revision"].as_u64() > full["revision"].as_u64());

    let (s, _) = c.call("POST", &format!("/sessions/{id}/replay"), Some(json!({ "prefix": n + 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v) = c.call("POST", &format!("/sessions/{id}/replay"), Some(json!({ "prefix": 4 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["angles_deg"], h["entries"][3]["angles_deg"]);
    assert_eq!(v["step_count"], 4);

    let (s, v) = c.call("POST", &format!("/sessions/{id}/replay"), Some(json!({ "prefix": 0 }))).await;
    assert_eq!(s, StatusCode::OK);
    let strip = |mut v: Value| {
        let o = v.as_object_mut().unwrap();
        o.remove("revision");
        o.remove("last_diagnostics");
        v
    };
    assert_eq!(strip(v), strip(initial));
}

#[tokio::test]
#[allow(clippy::await_holding_lock)]
async fn busy_session_answers_409() {
    let c = Client::new();
    let id = c.create(json!({})).await;
    let slot = c.state.session(&id).unwrap();
    let guard = slot.session.lock().unwrap();
    for (method, uri, body) in [
        ("POST", format!("/sessions/{id}/joints/2/lock"), None),
        ("POST", format!("/sessions/{id}/steps"), Some(json!({}))),
        ("POST", format!("/sessions/{id}/replay"), Some(json!({ "prefix": 0 }))),
    ] {
        let (s, v) = c.call(method, &uri, body).await;
        assert_eq!(s, StatusCode::CONFLICT, "{uri}: {v}");
    }
    // committed state stays readable
    let (s, _) = c.call("GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(s, StatusCode::OK);
    drop(guard);
    let (s, _) = c.call("POST", &format!("/sessions/{id}/joints/2/lock"), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
#[allow(clippy::await_holding_lock)]
async fn sessions_are_independent() {
    let c = Client::new();
    let a = c.create(json!({})).await;
    let b = c.create(json!({ "config": { "n_joints": 3 } })).await;
    let slot = c.state.session(&a).unwrap();
    let _guard = slot.session.lock().unwrap();
    let (s, _) = c.call("POST", &format!("/sessions/{b}/joints/1/lock"), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn static_physics_steps_report_diagnostics() {
    let c = Client::new();
    let id = c
        .create(json!({ "physics": { "mode": "static", "friction": { "mu": 0.085, "policy": "magnitude" } } }))
        .await;
    let (s, v) = c
        .call(
            "POST",
            &format!("/sessions/{id}/steps"),
            Some(json!({ "tendon": { "tensions": { "f1_n": 0.0, "f2_n": 0.98, "f3_n": 0.0, "f4_n": 0.0 } } })),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["diagnostics"]["solver"], "statics");
    assert!(v["diagnostics"]["max_residual"].as_f64().unwrap() <= 1e-8);
    let (s, _) = c
        .call("POST", &format!("/sessions/{id}/steps"), Some(json!({ "tendon": { "group_x_mm": 60.0 } })))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn snapshots_persist_and_restore() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ServiceOptions {
        snapshot_dir: Some(dir.path().to_path_buf()),
        ..ServiceOptions::default()
    };
    let c = Client::with(opts.clone());
    let id = c.create(json!({})).await;
    let script = serde_json::to_value(presets::table_two(1).unwrap()).unwrap();
    for step in script["steps"].as_array().unwrap() {
        c.call("POST", &format!("/sessions/{id}/steps"), Some(step.clone())).await;
    }
    let before = c.state(&id).await;
    let (_, snap) = c.call("GET", &format!("/sessions/{id}/snapshot"), None).await;
    assert!(snap["history"]["entries"].as_array().unwrap().len() == 2);

    let restored = Client::with(opts);
    assert_eq!(restored.state.restore_snapshots().unwrap(), 1);
    let after = restored.state(&id).await;
    let strip = |mut v: Value| {
        let o = v.as_object_mut().unwrap();
        o.remove("revision");
        o.remove("created_at_unix");
        v
    };
    assert_eq!(strip(after), strip(before));
    let fresh = restored.create(json!({})).await;
    assert_ne!(fresh, id);
}
