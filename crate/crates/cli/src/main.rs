use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relext_core::mock::MockKind;

mod commands;
mod config;
mod io;

#[derive(Parser, Debug)]
#[command(name = "relext", version, about = "Extract evidential relation triplets from biomedical web pages")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Configuration file (TOML). Defaults to ./relext.toml when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for stage inputs and outputs; overrides paths.workdir.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Process at most N candidates.
    #[arg(long, global = true)]
    pub limit: Option<usize>,
    /// Omit timestamps and latencies so reruns are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Model whose labels resolve malformed outputs in agreement scoring.
    #[arg(long, global = true)]
    pub reference: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert the HTML pages listed in the manifest into documents.jsonl.
    Preprocess,
    /// Match thesaurus terms and write candidates.jsonl.
    Match,
    /// Classify candidates and write triplets, report and malformed records.
    Extract,
    /// Score benchmark predictions and inter-model agreement.
    Eval {
        /// Benchmark JSON lines; defaults to paths.benchmark.
        #[arg(long)]
        benchmark: Option<PathBuf>,
    },
    /// Serve a scripted chat or embedding endpoint until stopped.
    MockServe {
        /// `chat` or `embed`.
        #[arg(long, value_parser = parse_kind)]
        kind: MockKind,
        /// JSON script; an empty script answers every chat request with No.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Port 0 picks a free port; the chosen address is printed on start.
        #[arg(long, default_value = "127.0.0.1:0")]
        bind: std::net::SocketAddr,
        /// Append every request to this JSON-lines file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<MockKind, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(1);
        }
    };
    let result = runtime.block_on(async {
        match cli.command {
            Command::Preprocess => commands::preprocess(&cli.global),
            Command::Match => commands::match_terms(&cli.global),
            Command::Extract => commands::extract(&cli.global).await,
            Command::Eval { benchmark } => commands::eval(&cli.global, benchmark),
            Command::MockServe { kind, script, bind, log } => commands::mock_serve(kind, script, bind, log).await,
        }
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
