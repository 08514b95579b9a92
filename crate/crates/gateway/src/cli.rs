//! Command-line interface. Every command prints JSON on stdout; failures print
//! `{"error": {...}}` on stderr and exit with status 1.

use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use notebar_core::eval::SplitSpec;
use notebar_core::forge::corpus::write_corpus;
use notebar_core::forge::corpus_stats;
use notebar_core::forge::qa::QaConfig;
use notebar_core::note::NoteId;
use notebar_core::router::features::FeatureSpec;
use notebar_core::router::model::save_model;
use notebar_core::router::train::HyperParams;
use notebar_core::Persona;
use serde_json::{json, Value};

use crate::client::client_from;
use crate::config::ServiceConfig;
use crate::ops::{self, GenerateRequest, GridChoice, OpError, OpResult, TrainRequest};

#[derive(Debug, Parser)]
#[command(name = "notebar", version, about = "Persona-conditioned note routing pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Corpus file: this tool's format or an external one with --mapping.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON field-mapping config for external schemas.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic persona-conditioned corpus.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Notes per persona, `N` or `MIN-MAX`.
        #[arg(long, value_parser = parse_range)]
        notes_per_persona: Option<(usize, usize)>,
        /// Comma-separated persona codes; all sixteen by default.
        #[arg(long, value_delimiter = ',')]
        personas: Option<Vec<Persona>>,
        #[arg(long)]
        inconsistency_rate: Option<f64>,
        /// Use the configured text client instead of templates.
        #[arg(long)]
        use_client: bool,
        /// Leave concepts pending instead of running QA.
        #[arg(long)]
        skip_qa: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run annotation QA and write the checked corpus.
    Qa {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
        /// Discrepancy at or above which a concept is flagged.
        #[arg(long, default_value_t = 0.25)]
        threshold: f64,
        /// Run the consistency stage through the text client (stub when no endpoint is configured).
        #[arg(long)]
        stage2: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Map an external dataset into this tool's corpus format.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus statistics and kind distribution.
    Stats {
        #[command(flatten)]
        input: InputArgs,
        /// Print a text table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Train, calibrate on validation and report test metrics.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Score the test split with a model or an external probability file.
    Eval {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Line-delimited `{note_id, probabilities}` records.
        #[arg(long)]
        probabilities: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hyperparameter sweep; writes CSV, JSON and sensitivity SVGs.
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        /// `default` (= `native`) or `transformer`.
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classify one note read from stdin.
    Route {
        #[arg(long)]
        persona: Persona,
        #[arg(long, env = "NOTEBAR_MODEL")]
        model: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
    },
    /// Render sensitivity SVGs from a sweep's JSON results.
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once('-') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> OpError + '_ {
    move |e| OpError::new("io", format!("{}: {e}", path.display()))
}

fn write_corpus_file(path: &std::path::Path, corpus: &[notebar_core::forge::CorpusEntry]) -> OpResult<()> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    write_corpus(std::io::BufWriter::new(f), corpus).map_err(|e| OpError::new("io", e))
}

fn load_config(path: Option<&std::path::Path>) -> OpResult<ServiceConfig> {
    ServiceConfig::load(path).map_err(|e| OpError::new("config", e))
}

/// Run one command; `stdin` feeds `route`. Returns the JSON (or text) to
/// print on success.
pub fn run(command: Command, stdin: &mut dyn Read) -> OpResult<String> {
    let v: Value = match command {
        Command::Generate {
            seed,
            notes_per_persona,
            personas,
            inconsistency_rate,
            use_client,
            skip_qa,
            config,
            out,
        } => {
            let req = GenerateRequest {
                seed,
                notes_per_persona,
                personas,
                inconsistency_rate,
                use_client,
                skip_qa,
            };
            let client = if use_client {
                let cfg = load_config(config.as_deref())?;
                Some(client_from(&cfg.client).map_err(|e| OpError::new("client", e))?)
            } else {
                None
            };
            let g = ops::generate(&req, client.as_deref())?;
            write_corpus_file(&out, &g.corpus)?;
            json!({ "out": out, "qa": g.qa.map(|q| q.counts), "stats": corpus_stats(&g.corpus) })
        }
        Command::Qa {
            input,
            out,
            threshold,
            stage2,
            seed,
            config,
        } => {
            let mut loaded = ops::load_dataset(&input.input, input.mapping.as_deref())?;
            let cfg = QaConfig {
                discrepancy_threshold: threshold,
                stage2_enabled: stage2,
                ..QaConfig::default()
            };
            let client = if stage2 {
                let mut svc = load_config(config.as_deref())?;
                svc.client.seed = seed;
                Some(client_from(&svc.client).map_err(|e| OpError::new("client", e))?)
            } else {
                None
            };
            let summary = ops::run_qa(&mut loaded.corpus, client.as_deref(), &cfg)?;
            write_corpus_file(&out, &loaded.corpus)?;
            json!({ "out": out, "rejected_records": loaded.errors, "qa": summary })
        }
        Command::Ingest { input, out } => {
            let loaded = ops::load_dataset(&input.input, input.mapping.as_deref())?;
            write_corpus_file(&out, &loaded.corpus)?;
            json!({ "out": out, "records": loaded.records, "errors": loaded.errors, "stats": corpus_stats(&loaded.corpus) })
        }
        Command::Stats { input, table } => {
            let loaded = ops::load_dataset(&input.input, input.mapping.as_deref())?;
            let stats = corpus_stats(&loaded.corpus);
            if table {
                return Ok(stats.to_string());
            }
            serde_json::to_value(stats).expect("stats serialize")
        }
        Command::Train {
            input,
            out,
            seed,
            epochs,
            learning_rate,
            batch_size,
        } => {
            let loaded = ops::load_dataset(&input.input, input.mapping.as_deref())?;
            let mut hp = HyperParams {
                seed,
                ..HyperParams::default()
            };
            hp.epochs = epochs.unwrap_or(hp.epochs);
            hp.learning_rate = learning_rate.unwrap_or(hp.learning_rate);
            hp.batch_size = batch_size.unwrap_or(hp.batch_size);
            let req = TrainRequest {
                hyperparams: hp,
                split: SplitSpec {
                    seed,
                    ..SplitSpec::default()
                },
                features: FeatureSpec::default(),
            };
            let outcome = ops::train_and_evaluate(&loaded.corpus, &req)?;
            std::fs::write(&out, save_model(&outcome.model)).map_err(io_err(&out))?;
            let mut v = serde_json::to_value(&outcome).expect("outcome serializes");
            v["out"] = json!(out);
            v
        }
        Command::Eval {
            input,
            model,
            probabilities,
            seed,
        } => {
            let loaded = ops::load_dataset(&input.input, input.mapping.as_deref())?;
            let model = model.as_deref().map(ops::read_model).transpose()?;
            let external = probabilities.as_deref().map(ops::read_probabilities).transpose()?;
            let split = SplitSpec {
                seed,
                ..SplitSpec::default()
            };
            serde_json::to_value(ops::evaluate(
                &loaded.corpus,
                &split,
                model.as_ref(),
                external.as_ref(),
            )?)
            .expect("eval serializes")
        }
        Command::Sweep { input, grid, out, seed } => {
            let loaded = ops::load_dataset(&input.input, input.mapping.as_deref())?;
            let grid = ops::resolve_grid(&GridChoice::Named(grid))?;
            let base = HyperParams {
                seed,
                ..HyperParams::default()
            };
            let split = SplitSpec {
                seed,
                ..SplitSpec::default()
            };
            let s = ops::sweep(
                &loaded.corpus,
                &grid,
                &base,
                &split,
                &FeatureSpec::default(),
                Some(&out),
            )?;
            json!({ "best": s.best, "files": s.files, "points": s.result.points.len() })
        }
        Command::Route { persona, model } => {
            let model = ops::read_model(&model)?;
            let mut text = String::new();
            stdin.read_to_string(&mut text).map_err(|e| OpError::new("io", e))?;
            serde_json::to_value(ops::route(&model, &text, persona, Some(NoteId::new("stdin")))?)
                .expect("route serializes")
        }
        Command::Plot { results, out } => json!({ "files": ops::plot_from_json(&results, &out)? }),
        Command::Serve { config, bind } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| OpError::new("io", e))?;
            rt.block_on(crate::service::serve(cfg))?;
            json!({ "status": "stopped" })
        }
    };
    Ok(serde_json::to_string_pretty(&v).expect("json output"))
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with(
    args: impl IntoIterator<Item = String>,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match run(cli.command, stdin) {
        Ok(text) => {
            let _ = writeln!(out, "{text}");
            0
        }
        Err(e) => {
            let _ = writeln!(err, "{}", json!({ "error": e }));
            1
        }
    }
}
