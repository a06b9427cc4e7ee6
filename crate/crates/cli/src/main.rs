use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eae_core::corpus::read_dump;
use eae_core::llm::ResponseCache;
use eae_core::runner::{
    builtin_baselines, load_baselines, plan_requests, read_predictions, render_report, run_experiment, ExperimentConfig,
    Hundredths, ReportFormat, RunnerError, DEFAULT_CACHE_DIR, REPORT_JSON_FILE,
};
use eae_core::score::{score_corpus, MatchMode, ReportLabels, ScoreReport};

#[derive(Parser)]
#[command(name = "eae", version, about = "Prompted document-level event argument extraction")]
struct Cli {
    /// Log progress (repeat for debug output). RUST_LOG overrides this.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Skip malformed corpus records instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Score a prediction dump against a gold dump.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        /// Dataset label for the report; defaults to the gold documents' dataset.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value = "-")]
        strategy: String,
        #[arg(long, default_value = "-")]
        model: String,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate finished runs next to optional baseline scores.
    Report {
        /// Run output directories, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        runs: Vec<PathBuf>,
        /// Baseline JSON file, or `builtin` for the shipped table.
        #[arg(long)]
        baselines: Option<String>,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
    },
    /// Inspect or empty the response cache.
    Cache {
        #[arg(value_enum)]
        action: CacheAction,
        /// Cache directory. Defaults to the config's cache dir, else `.eae-cache`.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// List the requests a run would send, without sending them.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// One JSON object per request instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Head,
}

impl From<Mode> for MatchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => MatchMode::ExactNormalized,
            Mode::Head => MatchMode::HeadWord,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CacheAction {
    Stats,
    Clear,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), RunnerError> {
    match command {
        Command::Run { config, lenient } => {
            let mut config = ExperimentConfig::load(&config)?;
            config.dataset.lenient |= lenient;
            let m = run_experiment(&config)?;
            let r = &m.report;
            println!("{} / {} / {}: {} documents", r.dataset, r.strategy, r.model, m.n_sampled);
            println!("Arg-I F1 {}", Hundredths::from_fraction(r.arg_i.f1));
            println!("Arg-C F1 {}", Hundredths::from_fraction(r.arg_c.f1));
            for (status, n) in &m.status_counts {
                println!("{}: {n}", serde_json::to_value(status).unwrap().as_str().unwrap_or_default());
            }
            println!("output: {}", config.output_dir.display());
            Ok(())
        }
        Command::Score { pred, gold, mode, dataset, strategy, model, out } => {
            let records = read_predictions(&pred)?;
            let docs = read_dump(&gold)?;
            let dataset = dataset
                .or_else(|| docs.first().map(|d| d.dataset.to_string()))
                .unwrap_or_default();
            let labels = ReportLabels { dataset, strategy, model };
            let report = score_corpus(&records, &docs, mode.into(), &labels)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            if let Some(out) = out {
                std::fs::write(&out, format!("{json}\n")).map_err(|e| io_error(&out, e))?;
            }
            println!("{json}");
            print_counts(&report);
            Ok(())
        }
        Command::Report { runs, baselines, format } => {
            let reports = runs.iter().map(|dir| read_report(dir)).collect::<Result<Vec<_>, _>>()?;
            let baselines = match baselines.as_deref() {
                None => Vec::new(),
                Some("builtin") => builtin_baselines(),
                Some(path) => load_baselines(path)?,
            };
            print!("{}", render_report(&reports, &baselines, format));
            Ok(())
        }
        Command::Cache { action, dir, config } => {
            let dir = match (dir, config) {
                (Some(dir), _) => dir,
                (None, Some(config)) => ExperimentConfig::load(&config)?.cache.dir,
                (None, None) => PathBuf::from(DEFAULT_CACHE_DIR),
            };
            match action {
                CacheAction::Stats => {
                    if !dir.exists() {
                        println!("{}: no cache", dir.display());
                        return Ok(());
                    }
                    let stats = ResponseCache::open(&dir)?.stats();
                    println!("{}: {} entries, {} bytes", dir.display(), stats.entries, stats.bytes);
                    for (model, n) in &stats.by_model {
                        println!("  {model}: {n}");
                    }
                }
                CacheAction::Clear => {
                    let n = ResponseCache::clear(&dir)?;
                    println!("removed {n} entries from {}", dir.display());
                }
            }
            Ok(())
        }
        Command::Plan { config, json } => {
            let config = ExperimentConfig::load(&config)?;
            let plan = plan_requests(&config)?;
            let mut total = 0;
            for p in &plan {
                total += p.prompt_tokens;
                if json {
                    let line = serde_json::json!({
                        "doc_id": p.doc_id,
                        "event_index": p.event_index,
                        "event_type": p.event_type,
                        "key": p.key.as_str(),
                        "prompt_tokens": p.prompt_tokens,
                        "trims": p.trims,
                    });
                    println!("{line}");
                } else {
                    println!(
                        "{}\t{}\t{}\t{} tokens\t{} trims\t{}",
                        p.doc_id,
                        p.event_index,
                        p.event_type,
                        p.prompt_tokens,
                        p.trims,
                        p.key.as_str()
                    );
                }
            }
            if !json {
                println!("{} requests, {total} prompt tokens", plan.len());
            }
            Ok(())
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> RunnerError {
    RunnerError::Io { path: path.to_path_buf(), source }
}

fn read_report(dir: &Path) -> Result<ScoreReport, RunnerError> {
    let path = dir.join(REPORT_JSON_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Record { path, line: 1, reason: e.to_string() })
}

fn print_counts(r: &ScoreReport) {
    println!();
    println!("| Metric | P | R | F1 | TP | FP | FN |");
    println!("| --- | ---: | ---: | ---: | ---: | ---: | ---: |");
    for (name, prf, c) in [("Arg-I", r.arg_i, r.counts_i), ("Arg-C", r.arg_c, r.counts_c)] {
        println!(
            "| {name} | {} | {} | {} | {} | {} | {} |",
            Hundredths::from_fraction(prf.precision),
            Hundredths::from_fraction(prf.recall),
            Hundredths::from_fraction(prf.f1),
            c.tp,
            c.fp,
            c.fn_
        );
    }
}
