use std::path::PathBuf;

use clap::Parser;
use nile_service::{router, AppState, ServiceConfig};
use tracing_subscriber::EnvFilter;

/// Serves the intent refinement API.
#[derive(Parser)]
#[command(name = "nile-service", version)]
struct Args {
    #[arg(long, env = "NILE_LISTEN", default_value = "127.0.0.1:8080")]
    listen: String,
    #[arg(long, env = "NILE_WEIGHTS")]
    weights: PathBuf,
    #[arg(long, env = "NILE_DATASET")]
    dataset: PathBuf,
    #[arg(long, env = "NILE_NETWORK")]
    network: Option<PathBuf>,
    #[arg(long, env = "NILE_SESSION_LOG")]
    session_log: Option<PathBuf>,
    /// Directory with the chat UI build, served at `/`.
    #[arg(long, env = "NILE_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    #[arg(long, env = "NILE_TRAIN_ON_FEEDBACK", default_value_t = true, action = clap::ArgAction::Set)]
    train_on_feedback: bool,
    #[arg(long, env = "NILE_INTENT_NAME", default_value = nile_core::pipeline::DEFAULT_INTENT_NAME)]
    intent_name: String,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let state = AppState::open(ServiceConfig {
        weights: args.weights,
        dataset: args.dataset,
        network: args.network,
        session_log: args.session_log,
        static_dir: args.static_dir,
        train_on_feedback: args.train_on_feedback,
        intent_name: args.intent_name,
    })?;
    let listener = tokio::net::TcpListener::bind(&args.listen).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
