//! HTTP API over an annotation session.
//!
//! Reads are served from an immutable snapshot and never wait on a running
//! job. Mutations are serialized and either apply completely or not at all.

mod error;
mod jobs;
mod routes;
mod state;

pub use error::{ApiError, ErrorBody};
pub use jobs::{JobKind, JobState, JobStatus};
pub use routes::{
    router, BatchRequest, EmbeddingPayload, EmbeddingPoint, LabelRequest, LabelResponse, MetricsResponse, RoundRequest,
    SessionSummary, ToaRequest, ToaResponse,
};
pub use state::{AppState, JobRequest, ServerConfig};

use std::net::SocketAddr;

/// Binds `addr` and serves until the process stops. Starts an embedding job
/// first if the session has none.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    if state.snapshot().embedding.is_none() {
        match state.start_job(JobRequest::Embed, |_| Ok(())) {
            Ok(job) => log::info!("computing initial embedding as job {}", job.job_id),
            Err(e) => log::warn!("could not start initial embedding: {}", e.body.message),
        }
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
