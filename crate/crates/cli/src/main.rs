use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clipmap_core::{Error, ErrorKind, TsneConfig};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "clipmap", version, about = "Embedding-assisted video clip annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a session file from a feature manifest.
    Ingest {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Annotation budget in seconds; rounds are refused once it is spent.
        #[arg(long)]
        budget: Option<f64>,
        /// Shell command run first to produce the manifest. It receives the
        /// manifest path in `CLIPMAP_MANIFEST`.
        #[arg(long)]
        extractor_cmd: Option<String>,
        #[command(flatten)]
        tsne: TsneArgs,
    },
    /// Compute the 2D embedding and store it in the session.
    Embed {
        session: PathBuf,
        #[command(flatten)]
        tsne: TsneArgs,
        /// Use a linear PCA projection instead of t-SNE.
        #[arg(long)]
        pca: bool,
        /// Also write the embedding JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print quality metrics over the labeled clips.
    Metrics {
        session: PathBuf,
        /// Seed for the k-means restarts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep perplexity and report how well the embedding separates the labels.
    Emulate {
        session: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,15,30,50,100,120")]
        perplexities: Vec<f64>,
        /// Label export to score against instead of the session's labels.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        tsne: TsneArgs,
        /// Print rows as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Draw videos for the next annotation batch.
    Batch {
        session: PathBuf,
        #[arg(long)]
        videos: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Record time of annotation and move to the next round, re-embedding.
    Round {
        session: PathBuf,
        /// Seconds the annotator spent on the closing round.
        #[arg(long)]
        toa: Option<f64>,
        /// Refreshed feature manifest for the new round.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write the temporal label export.
    Export {
        session: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply labels from an export file to the session.
    ImportLabels { session: PathBuf, labels: PathBuf },
    /// Serve the annotation API.
    Serve {
        session: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

/// Overrides for the session's t-SNE settings. Names follow the config fields.
#[derive(Args, Debug, Default, Clone)]
pub struct TsneArgs {
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long, alias = "exaggeration")]
    pub early_exaggeration: Option<f64>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long, alias = "iters")]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub exaggeration_iters: Option<usize>,
    #[arg(long)]
    pub momentum_initial: Option<f64>,
    #[arg(long)]
    pub momentum_final: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TsneArgs {
    pub fn apply(&self, base: &TsneConfig) -> clipmap_core::Result<TsneConfig> {
        let mut c = base.clone();
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = v; })* };
        }
        set!(
            perplexity,
            early_exaggeration,
            learning_rate,
            iterations,
            theta,
            exaggeration_iters,
            momentum_initial,
            momentum_final,
            seed
        );
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Io => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Validation | ErrorKind::NotFound | ErrorKind::Conflict => 2,
    }
}

fn run(cli: Cli) -> clipmap_core::Result<()> {
    match cli.command {
        Command::Ingest {
            manifest,
            out,
            budget,
            extractor_cmd,
            tsne,
        } => {
            if let Some(cmd) = extractor_cmd {
                commands::run_extractor(&cmd, &manifest)?;
            }
            commands::ingest(&manifest, &out, budget, &tsne)
        }
        Command::Embed {
            session,
            tsne,
            pca,
            out,
        } => commands::embed(&session, &tsne, pca, out.as_deref()),
        Command::Metrics { session, seed } => commands::metrics(&session, seed),
        Command::Emulate {
            session,
            perplexities,
            labels,
            tsne,
            json,
        } => commands::emulate(&session, &perplexities, labels.as_deref(), &tsne, json),
        Command::Batch { session, videos, seed } => commands::batch(&session, videos, seed),
        Command::Round { session, toa, manifest } => commands::round(&session, toa, manifest.as_deref()),
        Command::Export { session, out } => commands::export(&session, out.as_deref()),
        Command::ImportLabels { session, labels } => commands::import_labels(&session, &labels),
        Command::Serve { session, port, host } => commands::serve(&session, SocketAddr::new(host, port)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let body = serde_json::json!({ "error": e.tag(), "message": e.to_string(), "exit_code": code });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
