//! `tunes` command line: ingest tables, inspect identified schemas and
//! graphs, run Cypher one-shots, ask single questions, and drive the
//! benchmark harness.
//!
//! Exit codes: 0 success, 1 usage, 2 parse failures (table formats, config
//! files, Cypher syntax), 3 runtime and provider errors (missing files,
//! LLM/embedding transport, evaluation budget).

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tunes_core::config::{Config, ConfigError};
use tunes_core::cypher::{run_query, FailureKind};
use tunes_core::eval::{run_benchmark, BenchMode, BenchOptions};
use tunes_core::graph::Graph;
use tunes_core::llm::CallLedger;
use tunes_core::retrieval::{Engine, RunFlags, TableContext};
use tunes_core::table::{load_dataset, load_table, Table, TableError, TableFormat, TaskKind};

#[derive(Parser)]
#[command(name = "tunes", version, about = "Entity-oriented table question answering")]
struct Cli {
    /// Config file (TOML). Defaults < file < TUNES_* env < flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Use the scripted mock LLM provider.
    #[arg(long, global = true)]
    mock: bool,

    /// Mock rule file (implies the mock provider applies these rules).
    #[arg(long, global = true, value_name = "FILE")]
    mock_rules: Option<PathBuf>,

    /// Override search.k.
    #[arg(long, global = true, value_name = "N")]
    k: Option<usize>,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Tsv,
    Json,
}

impl FormatArg {
    fn to_format(self) -> TableFormat {
        match self {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Tsv => TableFormat::Tsv,
            FormatArg::Json => TableFormat::JsonTable,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Base,
    Cot,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Qa,
    Fact,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a table file to the engine's JSON-table format.
    Ingest {
        #[arg(long)]
        table: PathBuf,
        /// Input format; guessed from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run entity identification and print the schema as JSON.
    Schema {
        #[arg(long)]
        table: PathBuf,
        /// Use the heuristic schema instead of an LLM.
        #[arg(long)]
        fallback: bool,
    },
    /// Build and disambiguate the graph; dump JSON (or DOT).
    Graph {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        dot: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the heuristic schema instead of an LLM.
        #[arg(long)]
        fallback: bool,
    },
    /// Run one Cypher query against a table graph or a graph dump.
    Cypher {
        /// The query; read from stdin (or --file) when omitted.
        query: Option<String>,
        #[arg(long, conflicts_with = "graph")]
        table: Option<PathBuf>,
        /// A JSON graph dump produced by `tunes graph`.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Answer a single question over a table.
    Ask {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        question: String,
        /// Iterative search-answer mode.
        #[arg(long)]
        cot: bool,
        #[arg(long, value_enum, default_value = "qa")]
        task: TaskArg,
        /// Also print the retrieval context and the generated Cypher.
        #[arg(long)]
        verbose: bool,
    },
    /// Run a JSONL dataset and report accuracy.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "base")]
        mode: ModeArg,
        /// Write the per-example JSONL report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        no_graph_search: bool,
        #[arg(long)]
        no_semantic: bool,
        #[arg(long)]
        no_fulltext: bool,
        /// Skip entity identification; each row becomes one node.
        #[arg(long)]
        row_oriented: bool,
        /// Zero recorded latencies so report bytes are run-independent.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        parallelism: Option<usize>,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        let code = match e {
            TableError::Io(_) => 3,
            TableError::Format { .. } | TableError::Schema(_) => 2,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Parse(_) => 2,
            ConfigError::Io(_) | ConfigError::Invalid(_) => 3,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(3, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    config.apply_env().map_err(|e| CliError::new(2, e.to_string()))?;
    if let Some(k) = cli.k {
        config.search.k = k;
    }
    if let Some(rules) = &cli.mock_rules {
        config.llm.mock_rules = rules.to_string_lossy().into_owned();
        config.llm.provider = "mock".to_string();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = resolve_config(&cli)?;
    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::new(1, "no subcommand; see --help"));
    };
    let mock = cli.mock || !config.llm.mock_rules.is_empty();

    match command {
        Command::Ingest { table, format, out } => {
            let format = format
                .map(FormatArg::to_format)
                .unwrap_or_else(|| TableFormat::from_path(&table));
            let parsed = load_table(&table, format)?;
            emit(out.as_deref(), parsed.to_json())?;
        }
        Command::Schema { table, fallback } => {
            let parsed = load_table(&table, TableFormat::from_path(&table))?;
            if fallback {
                let schema = tunes_core::schema::fallback_schema(&parsed);
                println!("{}", serde_json::to_string_pretty(&schema).expect("schema serializes"));
            } else {
                let engine = build_engine(&config, mock, RunFlags::default())?;
                let ledger = CallLedger::new();
                let outcome = tunes_core::schema::identify_schema(
                    &parsed,
                    &engine.gateway,
                    &ledger,
                    &engine.prompts,
                    &engine.pk_examples,
                    &engine.relation_examples,
                    engine.search.window,
                )
                .map_err(|e| CliError::new(3, e.to_string()))?;
                for w in &outcome.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "schema": outcome.schema,
                        "transposed": outcome.transposed,
                        "used_fallback": outcome.used_fallback,
                    }))
                    .expect("schema serializes")
                );
            }
        }
        Command::Graph {
            table,
            dot,
            out,
            fallback,
        } => {
            let parsed = load_table(&table, TableFormat::from_path(&table))?;
            let ctx = build_context(&config, mock, fallback, &parsed)?;
            let dump = if dot { ctx.graph.to_dot() } else { ctx.graph.to_json() };
            emit(out.as_deref(), dump)?;
        }
        Command::Cypher {
            query,
            table,
            graph,
            file,
        } => {
            let source = match (query, file) {
                (Some(q), _) => q,
                (None, Some(path)) => std::fs::read_to_string(path)?,
                (None, None) => {
                    let mut buf = String::new();
                    std::io::stdin().read_to_string(&mut buf)?;
                    buf
                }
            };
            let graph = match (graph, table) {
                (Some(dump), _) => Graph::from_json(&std::fs::read_to_string(dump)?)
                    .map_err(|e| CliError::new(2, e.to_string()))?,
                (None, Some(path)) => {
                    let parsed = load_table(&path, TableFormat::from_path(&path))?;
                    let has_provider = mock || !config.llm.provider.is_empty();
                    if !has_provider {
                        eprintln!("note: no LLM provider configured; using the heuristic schema");
                    }
                    build_context(&config, mock, !has_provider, &parsed)?.graph
                }
                (None, None) => {
                    return Err(CliError::new(1, "cypher needs --graph or --table"));
                }
            };
            let outcome = run_query(&source, &graph).map_err(|f| {
                let code = match f.kind {
                    FailureKind::Lex | FailureKind::Parse | FailureKind::Unsupported => 2,
                    FailureKind::Budget | FailureKind::Eval => 3,
                };
                CliError::new(code, f.to_string())
            })?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if !outcome.rows.columns.is_empty() {
                println!("{}", outcome.rows.columns.join("\t"));
            }
            for row in &outcome.rows_text {
                println!("{}", row.join("\t"));
            }
        }
        Command::Ask {
            table,
            question,
            cot,
            task,
            verbose,
        } => {
            let parsed = load_table(&table, TableFormat::from_path(&table))?;
            let engine = build_engine(&config, mock, RunFlags::default())?;
            let ledger = CallLedger::new();
            let ctx = TableContext::build(&engine, &parsed, &ledger)
                .map_err(|e| CliError::new(3, e.to_string()))?;
            for w in &ctx.warnings {
                eprintln!("warning: {w}");
            }
            let task = match task {
                TaskArg::Qa => TaskKind::Qa,
                TaskArg::Fact => TaskKind::FactVerification,
            };
            let mut session = tunes_core::retrieval::QuestionSession::new(&engine, &ctx);
            let (outcome, retrieval) = if cot {
                tunes_core::answer::answer_cot(&mut session, &question, task)
            } else {
                tunes_core::answer::answer_base(&mut session, &question, task)
            }
            .map_err(|e| CliError::new(3, e.to_string()))?;

            if verbose {
                if let Some(q) = &retrieval.cypher_query {
                    println!("cypher:\n{q}\n");
                }
                if let Some(f) = &retrieval.cypher_failure {
                    println!("cypher failure: {f}\n");
                }
                let context = tunes_core::answer::build_context(&retrieval, &session);
                println!("context:\n{}", context.render());
            }
            println!("answer: {}", outcome.answer);
            if !outcome.explanation.is_empty() {
                println!("explanation: {}", outcome.explanation);
            }
            match outcome.confidence {
                Some(c) => println!("confidence: {c}"),
                None => println!("confidence: n/a"),
            }
            println!("iterations: {}", outcome.iterations);
            println!(
                "llm_calls: {}",
                session.ledger.total() + ledger.total()
            );
        }
        Command::Bench {
            dataset,
            mode,
            report,
            no_graph_search,
            no_semantic,
            no_fulltext,
            row_oriented,
            deterministic,
            parallelism,
        } => {
            let flags = RunFlags {
                no_graph_search,
                no_semantic,
                no_fulltext,
                row_oriented,
            };
            let engine = build_engine(&config, mock, flags)?;
            let examples = load_dataset(&dataset)?;
            let base_dir = dataset
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let options = BenchOptions {
                mode: match mode {
                    ModeArg::Base => BenchMode::Base,
                    ModeArg::Cot => BenchMode::Cot,
                },
                parallelism: parallelism.unwrap_or(config.bench.parallelism),
                deterministic_timing: deterministic,
            };
            let result = run_benchmark(&engine, &examples, &base_dir, &options);
            if let Some(path) = report {
                std::fs::write(&path, result.to_jsonl())?;
                eprintln!("report written to {}", path.display());
            }
            print!("{}", result.summary());
        }
    }
    Ok(())
}

fn build_engine(config: &Config, mock: bool, flags: RunFlags) -> Result<Engine, CliError> {
    Ok(config.build_engine(mock, flags)?)
}

fn build_context(
    config: &Config,
    mock: bool,
    fallback: bool,
    table: &Table,
) -> Result<TableContext, CliError> {
    let ctx = if fallback {
        let embedder = tunes_core::vector::HashedBagProvider::new(config.embedding.dim);
        TableContext::build_with_fallback_schema(table, &embedder, &config.search_config())
    } else {
        let engine = build_engine(config, mock, RunFlags::default())?;
        let ledger = CallLedger::new();
        TableContext::build(&engine, table, &ledger)
    }
    .map_err(|e| CliError::new(3, e.to_string()))?;
    for w in &ctx.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ctx)
}

fn emit(out: Option<&Path>, content: String) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => println!("{content}"),
    }
    Ok(())
}
