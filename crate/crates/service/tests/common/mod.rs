#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rtr_service::api::{router, AppState, ServiceOptions};
use serde_json::Value;
use tower::ServiceExt;

pub struct Client {
    pub state: Arc<AppState>,
    pub app: Router,
}

impl Client {
    pub fn new() -> Self {
        Self::with(ServiceOptions::default())
    }

    pub fn with(options: ServiceOptions) -> Self {
        let state = Arc::new(AppState::new(options));
        Self {
            app: router(state.clone()),
            state,
        }
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        assert_eq!(res.headers()["rtr-api-version"], "1");
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, v)
    }

    pub async fn create(&self, body: Value) -> String {
        let (s, v) = self.call("POST", "/sessions", Some(body)).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_owned()
    }

    pub async fn state(&self, id: &str) -> Value {
        let (s, v) = self.call("GET", &format!("/sessions/{id}/state"), None).await;
        assert_eq!(s, StatusCode::OK);
        v
    }
}
