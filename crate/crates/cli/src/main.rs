use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use refit_core::journal::{read_records, replay, Journal};
use refit_core::refit::Mode;
use refit_core::similarity::{distance_report, top_k};
use refit_core::store::{format_component, save_text};
use refit_core::{Error, Precision, Space, TextFormat, VersionId, Workbench};
use refit_service::{
    load_space, open_workbench, router_with_ui, split_words, to_json_string, AppState, DistancesResponse, ParamsBody,
    RefitReport, RefitRequest, SearchResponse,
};

#[derive(Parser)]
#[command(name = "refit", version, about = "Interactive word-embedding re-fitting workbench")]
struct Cli {
    /// Embedding file format.
    #[arg(long, global = true, default_value = "word2vec-text")]
    format: TextFormat,

    /// Print reports as JSON.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Append interactions to this file; existing records are replayed first.
        #[arg(long)]
        journal: Option<PathBuf>,
        /// Directory of static files for the browser client.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Nearest neighbors of a word by cosine similarity.
    Search {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Re-fit a word set and report what moved.
    Refit {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Comma-separated members.
        #[arg(long)]
        words: String,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the adjusted space here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PrecisionArg::Compact)]
        precision: PrecisionArg,
    },
    /// Pairwise distances among words.
    Distances {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        words: String,
    },
    /// Re-execute a journal and emit the final space.
    Replay {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        /// Write the final space here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PrecisionArg::Exact)]
        precision: PrecisionArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    /// Six decimals.
    Compact,
    /// Shortest text that reads back bit-for-bit.
    Exact,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Compact => Precision::Compact,
            PrecisionArg::Exact => Precision::RoundTrip,
        }
    }
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

/// Invalid flag combination discovered after parsing.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidSpec(_) | Error::InvalidParams(_)) => 2,
        Some(Error::ChainMismatch(_)) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let format = cli.format;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Serve {
            embeddings,
            listen,
            journal,
            ui,
        } => {
            drop(out);
            return serve(&embeddings, format, listen, journal.as_deref(), ui.as_deref());
        }
        Command::Search { embeddings, query, k } => {
            let space = load(&embeddings, format)?;
            let result = top_k(&space, &query, k)?;
            let response = SearchResponse {
                query,
                version: space.version(),
                hits: result.hits,
            };
            if cli.json {
                writeln!(out, "{}", to_json_string(&response)?)?;
            } else {
                writeln!(out, "{:>4}  {:<24} {:>10}", "rank", "word", "cosine")?;
                for (i, hit) in response.hits.iter().enumerate() {
                    writeln!(out, "{:>4}  {:<24} {:>10.6}", i + 1, hit.word, hit.score)?;
                }
            }
        }
        Command::Refit {
            embeddings,
            mode,
            words,
            target,
            sweeps,
            tolerance,
            alpha,
            out: out_path,
            precision,
        } => {
            let request = RefitRequest {
                mode,
                words: split_words(&words),
                target,
                params: Some(ParamsBody {
                    max_sweeps: sweeps,
                    tolerance,
                    alpha,
                    beta_scheme: None,
                }),
                base_version: VersionId::BASE,
            };
            let (spec, params) = request.resolve()?;
            let mut bench = Workbench::new(load(&embeddings, format)?, Journal::in_memory())?;
            let (outcome, version) = bench.refit(&spec, &params, request.base_version)?;
            let report = RefitReport::new(&spec, outcome, version);
            if let Some(path) = out_path {
                write_space(&bench.current(), format, precision.into(), &path)?;
            }
            if cli.json {
                writeln!(out, "{}", to_json_string(&report)?)?;
            } else {
                print_refit(&mut out, &report)?;
            }
        }
        Command::Distances { embeddings, words } => {
            let space = load(&embeddings, format)?;
            let words = split_words(&words);
            if words.is_empty() {
                return Err(Usage("--words must list at least one word".into()).into());
            }
            let response = DistancesResponse {
                version: space.version(),
                report: distance_report(&space, &words)?,
            };
            if cli.json {
                writeln!(out, "{}", to_json_string(&response)?)?;
            } else {
                print_matrix(&mut out, "euclidean", &response.report.words, &response.report.euclidean)?;
                writeln!(out)?;
                print_matrix(&mut out, "cosine", &response.report.words, &response.report.cosine)?;
            }
        }
        Command::Replay {
            embeddings,
            journal,
            out: out_path,
            precision,
        } => {
            let base = load(&embeddings, format)?;
            let file = File::open(&journal).with_context(|| format!("opening {}", journal.display()))?;
            let records = read_records(BufReader::new(file))?;
            let space = replay(&records, base)?;
            match out_path {
                Some(path) => {
                    write_space(&space, format, precision.into(), &path)?;
                    if cli.json {
                        let summary = serde_json::json!({
                            "records": records.len(),
                            "version": space.version(),
                            "digest": space.digest(),
                        });
                        writeln!(out, "{summary}")?;
                    } else {
                        writeln!(
                            out,
                            "replayed {} records, final version {}, digest {}",
                            records.len(),
                            space.version(),
                            space.digest()
                        )?;
                    }
                }
                None => save_text(&space, format, precision.into(), &mut out)?,
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn load(path: &Path, format: TextFormat) -> Result<Space> {
    load_space(path, format).with_context(|| format!("loading {}", path.display()))
}

fn write_space(space: &Space, format: TextFormat, precision: Precision, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    save_text(space, format, precision, &mut w)?;
    w.flush()?;
    Ok(())
}

fn print_refit(out: &mut impl Write, r: &RefitReport) -> io::Result<()> {
    writeln!(out, "mode {}, version {} -> {}", r.mode, r.base_version, r.version)?;
    writeln!(
        out,
        "{} sweeps, {}",
        r.sweeps_executed,
        if r.converged { "converged" } else { "not converged" }
    )?;
    let first = r.objective_trace.first().copied().unwrap_or(0.0);
    let last = r.objective_trace.last().copied().unwrap_or(0.0);
    writeln!(out, "objective {} -> {}", format_component(first, Precision::Compact), format_component(last, Precision::Compact))?;
    writeln!(out)?;
    writeln!(out, "{:<24} {:>12}  vector", "word", "moved")?;
    for word in &r.members {
        let moved = r.displacement.get(word).copied().unwrap_or(0.0);
        let vector = match r.updates.get(word) {
            Some(v) => v
                .iter()
                .map(|&x| format_component(x, Precision::Compact))
                .collect::<Vec<_>>()
                .join(" "),
            None => "(unchanged)".to_string(),
        };
        writeln!(out, "{:<24} {:>12}  {}", word, format_component(moved, Precision::Compact), vector)?;
    }
    Ok(())
}

fn print_matrix(out: &mut impl Write, title: &str, words: &[String], m: &[Vec<f64>]) -> io::Result<()> {
    write!(out, "{title:<16}")?;
    for w in words {
        write!(out, " {w:>12}")?;
    }
    writeln!(out)?;
    for (w, row) in words.iter().zip(m) {
        write!(out, "{w:<16}")?;
        for x in row {
            write!(out, " {x:>12.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn serve(embeddings: &Path, format: TextFormat, listen: SocketAddr, journal: Option<&Path>, ui: Option<&Path>) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let bench = open_workbench(embeddings, format, journal).with_context(|| format!("opening session on {}", embeddings.display()))?;
    let app = router_with_ui(AppState::new(bench), ui);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        refit_service::serve(listener, app).await?;
        Ok(())
    })
}
