use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use prefdesign::session::SessionManager;
use prefdesign_cli::{format_summary, router, run_command};

#[derive(Parser)]
#[command(
    name = "prefdesign",
    version,
    about = "Active preference learning with counterfactual queries and environment design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment with simulated users.
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results.csv, summary.json and traces/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the interactive session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of static UI assets served at non-API paths.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Write a JSON snapshot of each session here after every change.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out } => match run_command(&config, out) {
            Ok((dir, results)) => {
                print!("{}", format_summary(&results));
                for e in &results.summary.errors {
                    eprintln!("episode {} user {} seed {} failed: {}", e.method, e.user, e.seed, e.message);
                }
                println!("wrote {}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Serve { port, static_dir, snapshots, host } => {
            let manager = Arc::new(match snapshots {
                Some(dir) => SessionManager::with_snapshots(dir),
                None => SessionManager::new(),
            });
            let app = router(manager, static_dir.as_deref());
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            let served = runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app).await
            });
            match served {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
