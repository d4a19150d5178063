use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ast_core::analytics::Sensor;
use ast_core::fixtures;
use ast_core::flightlog::{write_csv, write_ulog};
use ast_core::knowledge::{self, ingest_corpus, msg_files, parse_msg_definitions, write_jsonl, Embedder, VectorIndex};
use ast_core::orchestrator::{write_json, Pipeline, PipelineConfig, PipelineError, RunManifest, RunStore, Stage};
use ast_core::scenario::{FeedbackNote, TargetSection};
use ast_core::server;

#[derive(Parser)]
#[command(name = "ast", version, about = "Simulation testing for small uncrewed aerial systems")]
struct Cli {
    /// JSON config file; AST_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data directory holding runs, logs and knowledge bases.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Use the bundled scripted backend and knowledge bases.
    #[arg(long, global = true)]
    mock: bool,
    /// Print machine-readable JSON instead of a summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogFormat {
    Ulog,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Chunk and embed `<dir>/<source>/<incident>.txt` into the incident index.
    IngestCorpus {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse `.msg` definitions into the parameter knowledge base.
    BuildParamKb {
        msg_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draft a scenario blueprint for a goal and wait for review.
    Run {
        #[arg(long)]
        goal: String,
    },
    /// Accept the blueprint, then generate and validate both scripts.
    Approve { run: String },
    /// Revise the blueprint.
    Feedback {
        run: String,
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "all")]
        section: TargetSection,
    },
    /// Record that the scripts were executed in the simulator.
    Executed { run: String },
    /// Attach a flight log (ULog or CSV) to a run, then analyse and evaluate.
    IngestLog { run: String, file: PathBuf },
    /// Stand-in for a simulator: feeds a synthetic flight log to a run.
    Replay {
        run: String,
        /// Sensor to fail in the synthetic flight.
        #[arg(long)]
        sensor: Option<Sensor>,
    },
    /// Ask a question about a stored log id or a log file.
    Analyze {
        log: String,
        #[arg(long)]
        question: String,
    },
    /// Recompute the evaluation of an analysed run.
    Eval { run: String },
    /// Show one run.
    Status { run: String },
    /// List runs.
    List,
    /// Write a synthetic flight log, optionally with one failing sensor.
    SynthLog {
        #[arg(long)]
        sensor: Option<Sensor>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "ulog")]
        format: LogFormat,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    if cli.mock {
        cfg.mock = true;
    }
    Ok(cfg)
}

/// Commands on an existing run reuse the backend mode it was started with.
fn pipeline_for_run(cli: &Cli, run: &str) -> Result<Pipeline> {
    let mut cfg = load_config(cli)?;
    let path = cfg.data_dir.join("runs").join(run).join("manifest.json");
    if !cfg.mock {
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                cfg.mock = m.config.mock;
            }
        }
    }
    Ok(Pipeline::new(cfg)?)
}

fn embedder(cfg: &PipelineConfig) -> Result<Embedder> {
    Ok(match cfg.embedder {
        ast_core::orchestrator::EmbedderKind::Hash => Embedder::Hash,
        ast_core::orchestrator::EmbedderKind::Remote => {
            let chat = cfg.chat.clone().context("remote embedder needs a chat backend")?;
            Embedder::Remote(Arc::new(ast_core::gateway::Gateway::remote(chat)?))
        }
    })
}

fn print_run(cli: &Cli, m: &RunManifest) -> Result<()> {
    if cli.json {
        println!("{}", serde_json::to_string_pretty(m)?);
        return Ok(());
    }
    println!("run {}  stage {}  revisions {}", m.run_id, m.stage, m.revision_count);
    for (name, rel) in &m.artifact_paths {
        println!("  {name:<16} {rel}");
    }
    if let Some(f) = &m.failure {
        println!("  failed in {} ({}): {}", f.stage, f.code, f.message);
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::IngestCorpus { dir, out } => {
            let cfg = load_config(cli)?;
            let corpus = ingest_corpus(dir, &embedder(&cfg)?)?;
            for p in &corpus.skipped {
                log::warn!("skipped {}", p.display());
            }
            let out = out.clone().unwrap_or_else(|| cfg.corpus_index_path());
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let index = VectorIndex::build(corpus.chunks)?;
            index.save(&out)?;
            write_json(&out.with_extension("manifest.json"), &corpus.manifest)?;
            for s in &corpus.manifest.sources {
                println!("{:<24} {:>5} incidents {:>8} tokens", s.name, s.incident_count, s.total_tokens);
            }
            println!("{} chunks -> {}", index.len(), out.display());
        }
        Cmd::BuildParamKb { msg_dir, out } => {
            let cfg = load_config(cli)?;
            let parsed = parse_msg_definitions(&msg_files(msg_dir)?)?;
            for m in &parsed.malformed {
                log::warn!("{}:{}: cannot parse {:?}", m.file, m.line, m.text);
            }
            let out = out.clone().unwrap_or_else(|| cfg.param_kb_path());
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            write_jsonl(&parsed.docs, &out)?;
            let flagged = parsed.docs.iter().filter(|d| d.flagged).count();
            println!("{} parameters ({flagged} without description) -> {}", parsed.docs.len(), out.display());
        }
        Cmd::Run { goal } => {
            let p = Pipeline::new(load_config(cli)?)?;
            let m = p.start_run(goal)?;
            print_run(cli, &m)?;
            if !cli.json {
                let bp = p.blueprint(&m.run_id)?;
                println!("\n{}", ast_core::orchestrator::blueprint_text(&bp));
            }
        }
        Cmd::Approve { run } => print_run(cli, &pipeline_for_run(cli, run)?.approve(run)?)?,
        Cmd::Feedback { run, text, section } => {
            let m = pipeline_for_run(cli, run)?.submit_feedback(run, FeedbackNote::new(text.clone(), *section))?;
            print_run(cli, &m)?;
        }
        Cmd::Executed { run } => print_run(cli, &pipeline_for_run(cli, run)?.mark_executed(run)?)?,
        Cmd::IngestLog { run, file } => {
            let bytes = read_file(file)?;
            print_run(cli, &pipeline_for_run(cli, run)?.ingest_flight_log(run, &bytes)?)?;
        }
        Cmd::Replay { run, sensor } => {
            let p = pipeline_for_run(cli, run)?;
            if p.load(run)?.stage == Stage::ScriptsValidated {
                p.mark_executed(run)?;
            }
            let bytes = write_ulog(&fixtures::synthetic_log(*sensor))?;
            print_run(cli, &p.ingest_flight_log(run, &bytes)?)?;
        }
        Cmd::Analyze { log, question } => {
            let p = Pipeline::new(load_config(cli)?)?;
            let path = Path::new(log);
            let log_id = if path.is_file() {
                p.ingest_log(&read_file(path)?)?.log_id
            } else {
                log.clone()
            };
            let out = p.query_analytics(&log_id, question)?;
            if cli.json {
                return print_json(&out);
            }
            println!("log {}  query {}  report {}", out.log_id, out.seq, out.report_path);
            for plot in &out.plot_paths {
                println!("  plot {plot}");
            }
            println!("\n{}", out.report.narrative);
        }
        Cmd::Eval { run } => {
            let eval = pipeline_for_run(cli, run)?.evaluate_run(run)?;
            if cli.json {
                return print_json(&eval);
            }
            let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            println!("faithfulness       {:.3}", eval.faithfulness);
            println!("response relevancy {:.3}", eval.response_relevancy);
            println!("context precision  {}", opt(eval.context_precision));
            println!("context recall     {}", opt(eval.context_recall));
        }
        // read-only views need no backend
        Cmd::Status { run } => print_run(cli, &RunStore::open(&load_config(cli)?.data_dir)?.load(run)?)?,
        Cmd::List => {
            let runs = RunStore::open(&load_config(cli)?.data_dir)?.list()?;
            if cli.json {
                return print_json(&runs);
            }
            for m in runs {
                println!("{}  {:<18} {}", m.run_id, m.stage.as_str(), m.user_goal);
            }
        }
        Cmd::SynthLog { sensor, out, format } => {
            let log = fixtures::synthetic_log(*sensor);
            let bytes = match format {
                LogFormat::Ulog => write_ulog(&log)?,
                LogFormat::Csv => write_csv(&log)?,
            };
            std::fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
            println!("{} series, {} messages -> {}", log.series.len(), log.messages.len(), out.display());
        }
        Cmd::Serve { port, host } => {
            let p = Arc::new(Pipeline::new(load_config(cli)?)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(p, std::net::SocketAddr::new(*host, *port)))?;
        }
    }
    Ok(())
}

/// 2 validation failure, 3 backend error, 4 bad input, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use ast_core::orchestrator::ErrorKind;
    if let Some(e) = err.downcast_ref::<PipelineError>() {
        return e.kind().exit_code() as u8;
    }
    if let Some(e) = err.downcast_ref::<knowledge::KnowledgeError>() {
        return match e {
            knowledge::KnowledgeError::BackendUnavailable(_) => ErrorKind::Backend.exit_code() as u8,
            _ => ErrorKind::BadInput.exit_code() as u8,
        };
    }
    if err.downcast_ref::<ast_core::flightlog::FlightLogError>().is_some() || err.downcast_ref::<std::io::Error>().is_some() {
        return ErrorKind::BadInput.exit_code() as u8;
    }
    1
}

fn main() -> ExitCode {
    // exit quietly when piped into `head` and friends
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(PipelineError::RunFailed { run_id, .. }) = e.downcast_ref::<PipelineError>() {
                eprintln!("run {run_id} is now failed; see its manifest for details");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
