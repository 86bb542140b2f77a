//! Operator command line: serve, query, bench and dataset tools.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 I/O, 4 data
//! validation, 5 planning failure, 6 realization failure, 7 LLM backend,
//! 8 benchmark harness failure or aborted sweep.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tabplan::actor::{parse_synthetic_source, Mode};
use tabplan::bench::{
    self, check_band_sizes, format_report, generate_cases, oracle_fixtures, BenchError, BenchReport,
    SuiteConfig, SHIPPED_BAND_SIZES,
};
use tabplan::config::Config;
use tabplan::kb::{load_kb, KnowledgeBase};
use tabplan::llm::{BackendConfig, BackendKind, Gateway};
use tabplan::pipeline::{answer_query, QueryConfig, QueryError};
use tabplan::plan::{plan_to_json, plan_to_wire};
use tabplan::planner::PlannerError;
use tabplan::service::{self, AppState, DecisionSummary};
use tabplan::synth::{self, GeneratorConfig};
use tabplan::table::{load_csv, validate, write_csv, Table};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INVALID: u8 = 4;
const EXIT_PLANNING: u8 = 5;
const EXIT_REALIZATION: u8 = 6;
const EXIT_LLM: u8 = 7;
const EXIT_BENCH: u8 = 8;

#[derive(Parser)]
#[command(
    name = "tabplan",
    version,
    about = "Plan-constrained LLM analysis of tabular test data"
)]
struct Cli {
    /// TOML configuration file shared with the service.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Answer one question over a dataset.
    Query(QueryArgs),
    /// Benchmark sweeps and reports.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Synthetic dataset generation and validation.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Args)]
struct BackendArgs {
    /// `http`, or `scripted:<fixture-file>`. Defaults to the configured backend.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    /// CSV file, or `synthetic:SEED[:ROWS]`.
    #[arg(long)]
    dataset: String,
    /// KB document for a CSV dataset. Defaults to the synthetic KB.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    question: String,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Safe)]
    mode: ModeArg,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Result rows printed in text mode.
    #[arg(long, default_value_t = 20)]
    max_rows: usize,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Safe,
    NaturalLanguage,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Safe => Mode::Safe,
            ModeArg::NaturalLanguage => Mode::NaturalLanguage,
        }
    }
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run a suite and write `<out>.txt` and `<out>.json`.
    Run {
        /// `default` or a suite JSON file.
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Safe)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Output path prefix, or `-` for stdout.
        #[arg(long, default_value = "-")]
        out: String,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Render a saved structured report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Write planner fixtures that answer every case with its ground truth.
    Fixtures {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Write `<out-dir>/dataset.csv` and `<out-dir>/kb.json`.
    Generate {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 55_000)]
        rows: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Load a CSV against a KB and report violations.
    Validate {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        kb: PathBuf,
    },
    /// Write the synthetic table as CSV.
    Export {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 55_000)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
    detail: Option<serde_json::Value>,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    let result = Config::load(cli.config.as_deref())
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
        .and_then(|config| match cli.command {
            Command::Serve { port, data_dir } => serve(config, port, data_dir),
            Command::Query(args) => query(&config, args, format),
            Command::Bench(cmd) => bench_command(&config, cmd, format),
            Command::Dataset(cmd) => dataset_command(cmd, format),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if format == Format::Structured {
                let doc = json!({ "error": f.message, "exit_code": f.code, "detail": f.detail });
                let _ = writeln!(io::stdout(), "{doc}");
            } else {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn emit(format: Format, text: &str, doc: serde_json::Value) {
    let mut out = io::stdout().lock();
    let _ = match format {
        Format::Text => out.write_all(text.as_bytes()),
        Format::Structured => writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json")),
    };
}

fn serve(mut config: Config, port: Option<u16>, data_dir: Option<PathBuf>) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();
    if let Some(p) = port {
        config.service.port = p;
    }
    if let Some(d) = data_dir {
        config.service.data_dir = d;
    }
    let state = AppState::from_config(&config).map_err(|e| match e {
        service::ServiceError::DataDir { .. } => Failure::new(EXIT_IO, e.to_string()),
        _ => Failure::new(EXIT_USAGE, e.to_string()),
    })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    runtime.block_on(async {
        let listener = service::bind(&config.service)
            .await
            .map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
        service::serve_until(listener, state, service::shutdown_signal())
            .await
            .map_err(|e| Failure::new(EXIT_IO, e.to_string()))
    })
}

fn gateway(config: &Config, backend: &BackendArgs) -> Result<Gateway, Failure> {
    let mut backend_config: BackendConfig = config.backend.clone();
    match backend.backend.as_deref() {
        None => {}
        Some("http") => backend_config.kind = BackendKind::Http,
        Some(other) => match other.strip_prefix("scripted:") {
            Some(path) => {
                backend_config.kind = BackendKind::Scripted;
                backend_config.fixtures = Some(PathBuf::from(path));
            }
            None => {
                return Err(Failure::new(
                    EXIT_USAGE,
                    format!("--backend expects http or scripted:<file>, got {other:?}"),
                ))
            }
        },
    }
    if let Some(path) = backend_config
        .fixtures
        .as_ref()
        .filter(|_| backend_config.kind == BackendKind::Scripted)
    {
        if !path.exists() {
            return Err(Failure::io(path, "fixture file not found"));
        }
    }
    Gateway::from_config(&backend_config).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn load_dataset(spec: &str, kb_path: Option<&Path>) -> Result<(Table, KnowledgeBase), Failure> {
    if let Some(source) = spec.strip_prefix("synthetic:") {
        let config = parse_synthetic_source(source).map_err(|e| Failure::new(EXIT_USAGE, e))?;
        let d = synth::generate(config).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
        return Ok((d.table, d.kb));
    }
    let kb = match kb_path {
        Some(p) => load_kb(p).map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", p.display())))?,
        None => synth::knowledge_base(&GeneratorConfig::default()),
    };
    let path = Path::new(spec);
    let file = fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    let table = load_csv(BufReader::new(file), &kb.schema)
        .map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())))?;
    Ok((table, kb))
}

/// Left-aligned text grid of the first `max_rows` rows.
fn render_table(table: &Table, max_rows: usize) -> String {
    let names: Vec<String> = table.schema().fields().iter().map(|f| f.name.clone()).collect();
    let shown = table.row_count().min(max_rows);
    let cells: Vec<Vec<String>> = (0..shown)
        .map(|r| table.row(r).iter().map(ToString::to_string).collect())
        .collect();
    let mut widths: Vec<usize> = names.iter().map(String::len).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |row: &[String]| {
        row.iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = format!("{}\n", line(&names));
    for row in &cells {
        out.push_str(&line(row));
        out.push('\n');
    }
    if shown < table.row_count() {
        out.push_str(&format!("... {} more row(s)\n", table.row_count() - shown));
    }
    out
}

fn query(config: &Config, args: QueryArgs, format: Format) -> CliResult {
    let (table, kb) = load_dataset(&args.dataset, args.kb.as_deref())?;
    let gateway = gateway(config, &args.backend)?;
    let query_config = QueryConfig {
        k_shot: args.k,
        n_samples: args.n,
        mode: args.mode.into(),
        max_retries: args.max_retries,
        parallelism: args.n.max(1),
    };
    let outcome = answer_query(
        &args.question,
        &table,
        &kb,
        &gateway,
        &query_config,
        &mut |_, _| {},
    );
    let done = outcome.map_err(|e| {
        let code = match &e {
            QueryError::Planning {
                source: PlannerError::Llm(_),
                ..
            }
            | QueryError::Realization {
                source: tabplan::actor::ActorError::Llm { .. },
                ..
            } => EXIT_LLM,
            QueryError::Planning {
                source: PlannerError::Kb(_) | PlannerError::NoSamples,
                ..
            } => EXIT_USAGE,
            QueryError::Planning { .. } => EXIT_PLANNING,
            QueryError::Realization { .. } => EXIT_REALIZATION,
        };
        let detail = match &e {
            QueryError::Planning {
                source: PlannerError::AllInvalid { candidates },
                ..
            } => Some(
                json!({ "candidate_errors": candidates.iter().map(|c| c.error.clone()).collect::<Vec<_>>() }),
            ),
            _ => Some(json!({ "memory": e.memory(), "timings": e.timings() })),
        };
        Failure {
            code,
            message: e.to_string(),
            detail,
        }
    })?;
    let summary = DecisionSummary::new(&done.decision, &done.nl_steps);
    let mut text = String::from("Plan:\n");
    for (i, s) in done.nl_steps.iter().enumerate() {
        text.push_str(&format!("  {}. {s}\n", i + 1));
    }
    text.push_str(&format!(
        "Votes: {}/{} (Level {})\n\nPlan document:\n{}\n\nResult ({} row(s)):\n{}\nTimings: planning {} ms, execution {} ms, total {} ms\n",
        summary.votes,
        summary.n_samples,
        summary.difficulty.level(),
        plan_to_wire(&done.decision.chosen),
        done.run.final_table.row_count(),
        render_table(&done.run.final_table, args.max_rows),
        done.timings.planning_ms,
        done.timings.execution_ms,
        done.timings.total_ms,
    ));
    let doc = json!({
        "question": args.question,
        "decision": summary,
        "plan": plan_to_json(&done.decision.chosen),
        "reflection": done.run.memory,
        "result": done.run.final_table.to_document(),
        "timings": done.timings,
    });
    emit(format, &text, doc);
    Ok(())
}

fn write_out(out: &str, name: &str, text: &str) -> CliResult {
    if out == "-" {
        let mut stdout = io::stdout().lock();
        let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
        Ok(())
    } else {
        let path = PathBuf::from(format!("{out}{name}"));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        }
        fs::write(&path, text).map_err(|e| Failure::io(&path, e))
    }
}

fn prepare_suite(
    name: &str,
) -> Result<
    (
        bench::BenchSuite,
        synth::SyntheticDataset,
        Vec<bench::BenchmarkCase>,
    ),
    Failure,
> {
    let suite = bench::load_suite(name).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    let data = synth::generate(suite.dataset).map_err(|e| Failure::new(EXIT_BENCH, e.to_string()))?;
    let cases =
        generate_cases(&suite.seeds, &data.table).map_err(|e| Failure::new(EXIT_BENCH, e.to_string()))?;
    if name == "default" {
        check_band_sizes(&cases, SHIPPED_BAND_SIZES).map_err(|e| Failure::new(EXIT_BENCH, e.to_string()))?;
    }
    Ok((suite, data, cases))
}

fn bench_command(config: &Config, cmd: BenchCommand, format: Format) -> CliResult {
    match cmd {
        BenchCommand::Run {
            suite,
            k,
            n,
            mode,
            parallelism,
            out,
            backend,
        } => {
            let gateway = gateway(config, &backend)?;
            let (suite, data, cases) = prepare_suite(&suite)?;
            let mut suite_config = SuiteConfig {
                k_shots: k,
                parallelism: parallelism.max(1),
                ..SuiteConfig::default()
            };
            suite_config.planner.n_samples = n;
            suite_config.planner.parallelism = n.max(1);
            suite_config.reflection.mode = mode.into();
            let (report, aborted) = match bench::run_suite(
                &suite.name,
                &cases,
                &data.table,
                &data.kb,
                &suite_config,
                &gateway,
            ) {
                Ok(r) => (r, None),
                Err(BenchError::Aborted { reason, report }) => (*report, Some(reason)),
                Err(e) => return Err(Failure::new(EXIT_BENCH, e.to_string())),
            };
            let (text, doc) = format_report(&report);
            let rendered = match format {
                Format::Text => text.clone(),
                Format::Structured => serde_json::to_string_pretty(&doc).expect("json") + "\n",
            };
            if out == "-" {
                write_out("-", "", &rendered)?;
            } else {
                write_out(&out, ".txt", &text)?;
                write_out(
                    &out,
                    ".json",
                    &(serde_json::to_string_pretty(&doc).expect("json") + "\n"),
                )?;
            }
            match aborted {
                Some(reason) => Err(Failure::new(EXIT_BENCH, format!("sweep aborted: {reason}"))),
                None => Ok(()),
            }
        }
        BenchCommand::Report { input, out } => {
            let raw = fs::read_to_string(&input).map_err(|e| Failure::io(&input, e))?;
            let report: BenchReport = serde_json::from_str(&raw)
                .map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", input.display())))?;
            let (text, doc) = format_report(&report);
            let rendered = match format {
                Format::Text => text,
                Format::Structured => serde_json::to_string_pretty(&doc).expect("json") + "\n",
            };
            write_out(&out, "", &rendered)
        }
        BenchCommand::Fixtures { suite, k, n, out } => {
            let (_, _, cases) = prepare_suite(&suite)?;
            let fixtures = oracle_fixtures(&cases, &k, n);
            let body = serde_json::to_string_pretty(&fixtures).expect("json");
            fs::write(&out, body).map_err(|e| Failure::io(&out, e))?;
            emit(
                format,
                &format!("wrote {} fixtures to {}\n", fixtures.len(), out.display()),
                json!({ "fixtures": fixtures.len(), "path": out }),
            );
            Ok(())
        }
    }
}

fn generator(seed: u64, rows: usize) -> Result<synth::SyntheticDataset, Failure> {
    let config = GeneratorConfig {
        n_rows: rows,
        ..GeneratorConfig::with_seed(seed)
    };
    synth::generate(config).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn dataset_command(cmd: DatasetCommand, format: Format) -> CliResult {
    match cmd {
        DatasetCommand::Generate { seed, rows, out_dir } => {
            let d = generator(seed, rows)?;
            fs::create_dir_all(&out_dir).map_err(|e| Failure::io(&out_dir, e))?;
            let csv = out_dir.join("dataset.csv");
            let kb = out_dir.join("kb.json");
            synth::export_csv(&d.table, &csv).map_err(|e| Failure::io(&csv, e))?;
            fs::write(&kb, d.kb.to_json()).map_err(|e| Failure::io(&kb, e))?;
            emit(
                format,
                &format!(
                    "wrote {} rows x {} fields to {}\nwrote KB to {}\n",
                    d.table.row_count(),
                    d.schema.fields().len(),
                    csv.display(),
                    kb.display()
                ),
                json!({ "csv": csv, "kb": kb, "rows": d.table.row_count(), "fields": d.schema.fields().len() }),
            );
            Ok(())
        }
        DatasetCommand::Validate { csv, kb } => {
            let kb_doc =
                load_kb(&kb).map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", kb.display())))?;
            let file = fs::File::open(&csv).map_err(|e| Failure::io(&csv, e))?;
            let table = match load_csv(BufReader::new(file), &kb_doc.schema) {
                Ok(t) => t,
                Err(e) => {
                    return Err(Failure {
                        code: EXIT_INVALID,
                        message: format!("{}: {e}", csv.display()),
                        detail: Some(json!({ "violations": [e.to_string()] })),
                    })
                }
            };
            let violations: Vec<String> = validate(&table).iter().map(ToString::to_string).collect();
            if !violations.is_empty() {
                if format == Format::Text {
                    for v in &violations {
                        eprintln!("{v}");
                    }
                }
                return Err(Failure {
                    code: EXIT_INVALID,
                    message: format!("{} violation(s)", violations.len()),
                    detail: Some(json!({ "violations": violations })),
                });
            }
            emit(
                format,
                &format!(
                    "ok: {} rows, {} fields\n",
                    table.row_count(),
                    table.schema().fields().len()
                ),
                json!({ "valid": true, "rows": table.row_count(), "fields": table.schema().fields().len() }),
            );
            Ok(())
        }
        DatasetCommand::Export { seed, rows, out } => {
            let d = generator(seed, rows)?;
            if out.as_os_str() == "-" {
                write_csv(&d.table, io::stdout().lock()).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
                return Ok(());
            }
            synth::export_csv(&d.table, &out).map_err(|e| Failure::io(&out, e))?;
            emit(
                format,
                &format!("wrote {} rows to {}\n", d.table.row_count(), out.display()),
                json!({ "csv": out, "rows": d.table.row_count() }),
            );
            Ok(())
        }
    }
}
