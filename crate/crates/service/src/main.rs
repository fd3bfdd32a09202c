use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use leafsev_service::{serve, AppState, ServiceConfig, DEFAULT_MAX_BODY};
use tokio::net::TcpListener;

#[derive(Debug, Parser)]
#[command(name = "leafsev-server", version, about = "HTTP API for leaf disease severity quantification")]
struct Args {
    /// Port to listen on (0 picks a free one).
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Directory holding one subdirectory per job.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Largest accepted request body, in bytes.
    #[arg(long, default_value_t = DEFAULT_MAX_BODY)]
    max_body: usize,
    /// Quantifications allowed to run at once (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested, draining");
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let args = Args::parse();

    let mut cfg = ServiceConfig::new(&args.data_dir);
    cfg.max_body = args.max_body;
    if let Some(w) = args.workers {
        cfg.workers = w.max(1);
    }
    let state = match AppState::open(&cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot open data directory {}: {e}", cfg.data_dir.display());
            return ExitCode::FAILURE;
        }
    };
    let listener = match TcpListener::bind(SocketAddr::new(args.host, args.port)).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot bind {}:{}: {e}", args.host, args.port);
            return ExitCode::FAILURE;
        }
    };
    if let Ok(addr) = listener.local_addr() {
        // machine-readable line so scripts can find an ephemeral port
        eprintln!("listening on http://{addr}");
    }
    match serve(listener, state, shutdown_signal()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("server error: {e}");
            ExitCode::FAILURE
        }
    }
}
