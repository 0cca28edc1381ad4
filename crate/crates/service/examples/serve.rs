//! Starts the session service with snapshots kept in a directory.
//!
//!     cargo run -p rtr-service --example serve [addr] [snapshot_dir]

use std::sync::Arc;

use rtr_service::api::{serve, AppState, ServiceOptions};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let addr = args.next().unwrap_or_else(|| "127.0.0.1:8080".into());
    let options = ServiceOptions {
        snapshot_dir: args.next().map(Into::into),
        ..ServiceOptions::default()
    };
    let state = Arc::new(AppState::new(options));
    let restored = state.restore_snapshots()?;
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    println!("listening on http://{} ({restored} sessions restored)", listener.local_addr()?);
    serve(listener, state).await
}
