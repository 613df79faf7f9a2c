//! Event-sourced planning service.
//!
//! Every mutating request is first appended to an NDJSON event log by a
//! single writer; the in-memory state is a pure function of that log, so
//! [`ServerState::replay`] reproduces it exactly.

pub mod api;
pub mod events;
pub mod service;
pub mod state;

use std::net::SocketAddr;
use std::path::Path;

use hazardline_core::config::Domain;

pub use events::{Event, EventError, EventLog, EventRecord, RunOutcome};
pub use service::{Service, ServiceError, LOG_FILE};
pub use state::{RunPhase, ServerState, SessionSummary, StateError};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

/// A bound, running server.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub service: Service,
    pub task: tokio::task::JoinHandle<std::io::Result<()>>,
}

/// Start serving on `addr` (port 0 picks a free port). Must be called
/// inside a tokio runtime.
pub async fn spawn(domain: Domain, data_dir: &Path, addr: SocketAddr) -> Result<RunningServer, ServeError> {
    let service = Service::start(domain, data_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let app = api::router(service.clone());
    let task = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(RunningServer { addr, service, task })
}

/// Serve until the process is stopped.
pub async fn serve(domain: Domain, data_dir: &Path, addr: SocketAddr) -> Result<(), ServeError> {
    let server = spawn(domain, data_dir, addr).await?;
    eprintln!("listening on http://{}", server.addr);
    server.task.await.map_err(std::io::Error::other)??;
    Ok(())
}
