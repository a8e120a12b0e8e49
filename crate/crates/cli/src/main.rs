//! Command-line front end: ingest a corpus, run scripted simulations,
//! fire one-shot queries, evaluate, benchmark, and sweep parameters.
//!
//! Exit codes: 0 success, 1 validation error, 2 input format error,
//! 3 runtime error. Warnings go to stderr; structured output goes to
//! stdout or `--out` and always embeds the config digest and seed.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crossmem::barrier::{
    authorize, parse_script, run_script, BarrierMode, Decision, HarnessParams, SessionRegistry,
};
use crossmem::bench::{run_bench, BenchSpec};
use crossmem::config::RunConfig;
use crossmem::corpus::{parse_coqa, populate, UserStrategy};
use crossmem::error::{Error, Result};
use crossmem::eval::{
    eval_queries_from_store, render_log, run_eval, EvalOptions, RelevanceStrategy, TargetPolicy,
    CSV_HEADER,
};
use crossmem::merge::cot_integrate;
use crossmem::retrieval::{build_query, top_k};
use crossmem::store::MemoryStore;
use crossmem::sweep::{run_sweep, sweep_csv, ParamGrid, SweepSource};

#[derive(Parser)]
#[command(name = "crossmem", version, about = "Cross-session memory engine")]
struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override (also settable via the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Default store path for subcommands that take one.
    #[arg(long, global = true)]
    store: Option<PathBuf>,

    /// Default log path for subcommands that write one.
    #[arg(long, global = true)]
    log: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CoQA-format corpus and populate a fresh store file.
    Ingest(IngestArgs),
    /// Run a script of open/close/say/query events against a store.
    Simulate(SimulateArgs),
    /// One-shot query against a store.
    Query(QueryArgs),
    /// Evaluate retrieval over a store and emit the metric report.
    Eval(EvalArgs),
    /// Synthesize a seeded store and time top-k queries.
    Bench(BenchArgs),
    /// Grid-search parameters, one evaluation per combination.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus file in the published CoQA serialization.
    #[arg(long)]
    input: PathBuf,
    /// Store file to write (overrides the global --store).
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    expect_dialogues: usize,
    #[arg(long, default_value_t = 7893)]
    expect_turns: usize,
    /// Turn expectation mismatches into hard errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value = "gated")]
    mode: String,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the post-run store (says mutate it) to this path.
    #[arg(long)]
    save_store: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    origin: String,
    /// Comma-separated session ids, or `all`.
    #[arg(long)]
    targets: String,
    #[arg(long)]
    user: String,
    #[arg(long, default_value = "")]
    topic: String,
    #[arg(long)]
    text: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    /// Sessions to open before authorizing (gated mode).
    #[arg(long, default_value = "")]
    open: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// strict | dialogue
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Cap on sampled probes per run.
    #[arg(long, default_value_t = 500)]
    max_queries: usize,
    /// Repeat the evaluation with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// gold | all: which sessions each probe targets.
    #[arg(long, default_value = "gold")]
    targets: String,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    records: usize,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Corpus input; required when the grid sweeps ingest-side keys.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Grid spec, e.g. "beta_hierarchy=0,0.5,1.0;top_k=3,5".
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 64)]
    max_combos: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "gold")]
    targets: String,
    #[arg(long, default_value_t = 500)]
    max_queries: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&config, &cli.store, args),
        Command::Simulate(args) => cmd_simulate(&config, &cli.store, &cli.log, args),
        Command::Query(args) => cmd_query(&config, &cli.store, args),
        Command::Eval(args) => cmd_eval(&config, &cli.store, &cli.log, args),
        Command::Bench(args) => cmd_bench(&config, args),
        Command::Sweep(args) => cmd_sweep(&config, &cli.store, args),
    }
}

fn required_store(local: &Option<PathBuf>, global: &Option<PathBuf>) -> Result<PathBuf> {
    local
        .clone()
        .or_else(|| global.clone())
        .ok_or_else(|| Error::Invalid {
            what: "arguments",
            why: "a store path is required (--store)".into(),
        })
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_ingest(config: &RunConfig, global_store: &Option<PathBuf>, args: IngestArgs) -> Result<()> {
    let store_path = required_store(&args.store, global_store)?;
    let corpus = parse_coqa(&args.input)?;
    let embedder = config.embedder()?;
    let mut store = MemoryStore::new(config.dim)?;
    let report = populate(
        &mut store,
        &corpus.dialogues,
        &embedder,
        &config.dynamics()?,
        &UserStrategy::default(),
    )?;
    store.save(&store_path)?;

    let mut warnings = Vec::new();
    if corpus.dialogue_count() != args.expect_dialogues {
        warnings.push(format!(
            "dialogue count {} differs from expected {}",
            corpus.dialogue_count(),
            args.expect_dialogues
        ));
    }
    if corpus.turn_count() != args.expect_turns {
        warnings.push(format!(
            "turn count {} differs from expected {}",
            corpus.turn_count(),
            args.expect_turns
        ));
    }
    for skipped in &corpus.skipped {
        warnings.push(format!("skipped item {}: {}", skipped.id, skipped.reason));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if args.strict && !warnings.is_empty() {
        return Err(Error::Invalid {
            what: "ingest expectations",
            why: warnings.join("; "),
        });
    }
    let summary = serde_json::json!({
        "dialogues": corpus.dialogue_count(),
        "turns": corpus.turn_count(),
        "skipped": corpus.skipped.len(),
        "records_inserted": report.records_inserted,
        "merged": report.merged,
        "decayed": report.decayed,
        "store_records": store.len(),
        "expected_dialogues": args.expect_dialogues,
        "expected_turns": args.expect_turns,
        "warnings": warnings,
        "config_digest": config.digest(),
        "seed": config.seed,
    });
    println!("{summary}");
    Ok(())
}

fn harness_params(config: &RunConfig) -> Result<HarnessParams> {
    Ok(HarnessParams {
        embedder: config.embedder()?,
        dynamics: config.dynamics()?,
        retrieval: config.retrieval()?,
        merge: Default::default(),
        default_k: config.top_k,
        seed: config.seed,
        config_digest: config.digest(),
    })
}

fn cmd_simulate(
    config: &RunConfig,
    global_store: &Option<PathBuf>,
    global_log: &Option<PathBuf>,
    args: SimulateArgs,
) -> Result<()> {
    let store_path = required_store(&args.store, global_store)?;
    let mode = BarrierMode::from_str(&args.mode)?;
    let mut store = load_or_new(&store_path, config.dim)?;
    let events = parse_script(&fs::read_to_string(&args.script)?)?;
    let run = run_script(&mut store, &events, mode, &harness_params(config)?)?;
    if let Some(log_path) = args.log.clone().or_else(|| global_log.clone()) {
        run.write_log(log_path)?;
    }
    if let Some(save) = &args.save_store {
        store.save(save)?;
    }
    let s = &run.summary;
    let summary = serde_json::json!({
        "events": s.events,
        "queries": s.queries,
        "granted": s.granted,
        "denied": s.denied,
        "inserted": s.inserted,
        "merged": s.merged,
        "decayed": s.decayed,
        "mode": mode.to_string(),
        "config_digest": config.digest(),
        "seed": config.seed,
    });
    println!("{summary}");
    Ok(())
}

fn load_or_new(path: &Path, dim: usize) -> Result<MemoryStore> {
    if path.exists() {
        MemoryStore::load(path)
    } else {
        MemoryStore::new(dim)
    }
}

fn cmd_query(config: &RunConfig, global_store: &Option<PathBuf>, args: QueryArgs) -> Result<()> {
    let store_path = required_store(&args.store, global_store)?;
    let store = MemoryStore::load(&store_path)?;
    let mode = match &args.mode {
        Some(m) => BarrierMode::from_str(m)?,
        None => config.barrier_mode,
    };
    let mut registry = SessionRegistry::with_sessions(store.session_ids());
    registry.register(args.origin.clone());
    for session in args.open.split(',').filter(|s| !s.is_empty()) {
        registry.open_session(session)?;
    }
    let targets: BTreeSet<String> = if args.targets == "all" {
        registry.sessions().clone()
    } else {
        args.targets
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect()
    };
    if targets.is_empty() {
        return Err(Error::Invalid {
            what: "targets",
            why: "need at least one session or 'all'".into(),
        });
    }
    let k = args.k.unwrap_or(config.top_k);
    let decision = authorize(&registry, mode, &args.origin, &targets)?;
    match decision {
        Decision::Denied { reason } => {
            println!(
                "{}",
                serde_json::json!({
                    "decision": "denied",
                    "reason": reason,
                    "config_digest": config.digest(),
                    "seed": config.seed,
                })
            );
        }
        Decision::Granted { scope } => {
            let query = build_query(
                args.user,
                args.topic,
                args.text,
                args.origin,
                0,
                k,
                &config.embedder()?,
            )?;
            let results = top_k(&query, &store, &config.retrieval()?, &scope)?;
            let tags = cot_integrate(&results);
            let out = serde_json::json!({
                "decision": "granted",
                "results": results.iter().map(|r| serde_json::json!({
                    "rank": r.rank,
                    "session_id": r.record.key.session_id,
                    "seq": r.record.seq,
                    "l2": r.l2,
                    "h": r.h,
                    "d": r.d,
                    "payload": r.record.payload_text,
                    "answer": r.record.answer_text,
                })).collect::<Vec<_>>(),
                "cot_tags": tags,
                "config_digest": config.digest(),
                "seed": config.seed,
            });
            println!("{out}");
        }
    }
    Ok(())
}

fn cmd_eval(
    config: &RunConfig,
    global_store: &Option<PathBuf>,
    global_log: &Option<PathBuf>,
    args: EvalArgs,
) -> Result<()> {
    let store_path = required_store(&args.store, global_store)?;
    let store = MemoryStore::load(&store_path)?;
    let mode = match &args.mode {
        Some(m) => BarrierMode::from_str(m)?,
        None => config.barrier_mode,
    };
    let strategy = match &args.strategy {
        Some(s) => RelevanceStrategy::from_str(s)?,
        None => config.strategy,
    };
    let base_seed = args.seed.unwrap_or(config.seed);
    if args.repeat == 0 {
        return Err(Error::OutOfRange {
            name: "repeat",
            value: 0.0,
            range: ">= 1",
        });
    }
    let embedder = config.embedder()?;
    let retrieval = config.retrieval()?;
    let digest = config.digest();

    let mut reports = Vec::with_capacity(args.repeat);
    let mut logs = String::new();
    for run_idx in 0..args.repeat {
        let opts = EvalOptions {
            k: args.k.unwrap_or(config.top_k),
            strategy,
            target_policy: TargetPolicy::from_str(&args.targets)?,
            mode,
            seed: base_seed + run_idx as u64,
            max_queries: args.max_queries,
        };
        let queries = eval_queries_from_store(&store, &opts, &embedder)?;
        let (report, log) = run_eval(&store, &queries, &opts, &retrieval, &digest)?;
        logs.push_str(&render_log(&log));
        reports.push(report);
    }
    if let Some(log_path) = args.log.clone().or_else(|| global_log.clone()) {
        fs::write(log_path, &logs)?;
    }

    let rendered = match args.format.as_str() {
        "csv" => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for (i, report) in reports.iter().enumerate() {
                out.push_str(&report.to_csv_row(i + 1));
                out.push('\n');
            }
            out.push_str(&format!("# config_digest={digest} seed={base_seed} mode={mode}\n"));
            out
        }
        "json" => {
            let mut s = serde_json::to_string_pretty(&reports).expect("reports serialize");
            s.push('\n');
            s
        }
        other => {
            return Err(Error::Invalid {
                what: "format",
                why: format!("{other:?} is not csv|json"),
            })
        }
    };
    emit(&args.out, &rendered)?;
    Ok(())
}

fn cmd_bench(config: &RunConfig, args: BenchArgs) -> Result<()> {
    let spec = BenchSpec {
        records: args.records,
        dim: args.dim.unwrap_or(config.dim),
        queries: args.queries,
        k: args.k.unwrap_or(config.top_k),
        seed: config.seed,
    };
    let report = run_bench(&spec, &config.digest())?;
    let mut rendered = serde_json::to_string_pretty(&report).expect("report serializes");
    rendered.push('\n');
    emit(&args.out, &rendered)?;
    Ok(())
}

fn cmd_sweep(config: &RunConfig, global_store: &Option<PathBuf>, args: SweepArgs) -> Result<()> {
    let grid = ParamGrid::parse(&args.grid)?;
    let opts = EvalOptions {
        target_policy: TargetPolicy::from_str(&args.targets)?,
        max_queries: args.max_queries,
        ..EvalOptions::default()
    };
    let corpus;
    let store;
    let source = match &args.input {
        Some(input) => {
            corpus = parse_coqa(input)?;
            SweepSource::Corpus(&corpus.dialogues)
        }
        None => {
            let store_path = required_store(&args.store, global_store)?;
            store = MemoryStore::load(&store_path)?;
            SweepSource::Store(&store)
        }
    };
    let rows = run_sweep(source, config, &grid, args.max_combos, &opts)?;
    let mut rendered = sweep_csv(&rows, &grid);
    rendered.push_str(&format!(
        "# config_digest={} seed={}\n",
        config.digest(),
        config.seed
    ));
    emit(&args.out, &rendered)?;
    Ok(())
}
