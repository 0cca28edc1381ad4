//! Drives one session through the HTTP interface in-process: lock a joint,
//! run a motion step, read the conditional workspace, then replay a prefix.
//!
//!     cargo run -p rtr-service --example session_client

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use rtr_service::api::{router, AppState, ServiceOptions};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Value) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    println!("{method} {uri} -> {status}");
    v
}

#[tokio::main]
async fn main() {
    let app = router(Arc::new(AppState::new(ServiceOptions::default())));
    let s = call(&app, "POST", "/sessions", json!({ "config": { "n_joints": 7 } })).await;
    let id = s["id"].as_str().unwrap().to_owned();

    let v = call(&app, "POST", &format!("/sessions/{id}/joints/4/lock"), Value::Null).await;
    let events: Vec<&str> = v["trace"].as_array().unwrap().iter().filter_map(|r| r["event"].as_str()).collect();
    println!("  lock trace: {}", events.join(" -> "));

    let step = json!({ "unlock": [], "tendon": { "group_x_mm": 64.0 }, "lock": [{ "joint": 1 }] });
    let v = call(&app, "POST", &format!("/sessions/{id}/steps"), step).await;
    println!("  angles_deg {}", v["angles_deg"]);

    // a step that cannot be met is rejected and leaves the session as it was
    let v = call(&app, "POST", &format!("/sessions/{id}/steps"), json!({ "tendon": { "group_x_mm": 1.0 } })).await;
    println!("  {}", v["error"]["message"]);

    for j in [2, 3, 5, 6] {
        call(&app, "POST", &format!("/sessions/{id}/joints/{j}/lock"), Value::Null).await;
    }
    let v = call(&app, "GET", &format!("/sessions/{id}/workspace?resolution_deg=6"), Value::Null).await;
    println!("  free joints {} give {} tip points", v["free_joints"], v["total_points"]);

    let v = call(&app, "POST", &format!("/sessions/{id}/replay"), json!({ "prefix": 1 })).await;
    println!("  after replaying 1 entry: angles_deg {}", v["angles_deg"]);
}
