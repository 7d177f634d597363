//! Pipeline jobs and interactive point-prompt refinement sessions over
//! HTTP.
//!
//! State lives in a data directory (see [`store`]) so that a restarted
//! service picks up its sessions again.

pub mod backends;
pub mod error;
pub mod http;
pub mod jobs;
pub mod service;
pub mod sessions;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use backends::Backends;
pub use error::{ServiceError, ServiceResult};
pub use http::router;
pub use jobs::{JobRecord, JobRequest, JobState};
pub use service::{Seed, Service, ServiceConfig};
pub use sessions::{PointPrompt, SessionStatus, SessionView, UsabilityTag};

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(service: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %service.data().root().display(), "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
