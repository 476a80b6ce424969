use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use walkdir::WalkDir;

use vstash_core::chunker::Language;
use vstash_core::config::{CliConfig, LoadedConfig};
use vstash_core::digest::content_digest;
use vstash_core::embedder::{load_precomputed, EmbedderSpec, EmbeddingProvider};
use vstash_core::eval::fixtures::{synthetic_bundle, SyntheticSpec};
use vstash_core::eval::{ingest_bundle, load_beir, run_eval, scale_benchmark, EvalOptions, ScaleOptions};
use vstash_core::ingest::{ingest_text, ChunkerChoice, IngestStatus};
use vstash_core::miner::{export_triples, mine_store, MineOptions};
use vstash_core::observability::miss_analysis;
use vstash_core::retrieval::{federated_search, FusionConfig, Profile, SearchMode, SearchOptions};
use vstash_core::store::{Invariant, OpenOptions, Store};
use vstash_core::{search, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MISSING_COMPONENT: u8 = 3;
const DEFAULT_TRAINER: &str = "vstash-train";

#[derive(Parser)]
#[command(name = "vstash", version, about = "Local hybrid retrieval engine")]
struct Cli {
    /// Store file.
    #[arg(long, global = true, env = "VSTASH_STORE")]
    store: Option<PathBuf>,
    /// Config file; defaults to the per-user location.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Embedder: test, test:<dim> or precomputed:<path>.
    #[arg(long, global = true)]
    embedder: Option<String>,
    /// Emit machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Chunk, embed and store files or directories.
    Ingest(IngestArgs),
    /// Hybrid search.
    Search(SearchArgs),
    /// Verify (and optionally repair) store invariants.
    Check {
        #[arg(long)]
        repair: bool,
    },
    /// Store statistics.
    Stats,
    /// Evaluate on a BEIR-format directory in a scratch store.
    Eval(EvalArgs),
    /// Mine disagreement triples from the store.
    Mine(MineArgs),
    /// Latency and NDCG stability on a padded synthetic store.
    Bench(BenchArgs),
    /// Explain why a document was not returned.
    Miss(MissArgs),
    /// Fine-tune with the external trainer, then re-embed the store.
    Retrain(RetrainArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[arg(long, default_value = "default")]
    collection: String,
    /// Force the code chunker.
    #[arg(long, conflicts_with = "text")]
    code: bool,
    /// Force the prose chunker.
    #[arg(long)]
    text: bool,
    #[arg(long = "tag")]
    tags: Vec<String>,
}

#[derive(Args)]
struct SearchArgs {
    query: String,
    #[arg(short, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "hybrid")]
    mode: SearchMode,
    /// Recency boost strength.
    #[arg(long, default_value_t = 0.0)]
    boost: f64,
    /// Comma-separated profile names (or store paths) for federated search.
    #[arg(long, value_delimiter = ',')]
    profiles: Vec<String>,
    /// Skip access-counter and event-log writes.
    #[arg(long)]
    no_record: bool,
}

#[derive(Args)]
struct EvalArgs {
    dir: PathBuf,
    #[arg(long, default_value = "hybrid")]
    mode: SearchMode,
    /// Adaptive fusion weights; false uses the fixed weights.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    adaptive: bool,
    #[arg(short, default_value_t = 10)]
    k: usize,
    /// Exit 1 when NDCG@10 falls below this value.
    #[arg(long)]
    min_ndcg: Option<f64>,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    queries_per_chunk: usize,
    #[arg(long)]
    max_chunks: Option<usize>,
    /// Append to an existing triples file instead of replacing it.
    #[arg(long)]
    append: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Target chunk counts, padded in ascending order.
    #[arg(long, value_delimiter = ',', default_value = "10000,50000")]
    chunks: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 384)]
    dim: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct MissArgs {
    query: String,
    /// Expected document id.
    #[arg(long, required_unless_present = "uri")]
    doc: Option<i64>,
    /// Expected document by source uri.
    #[arg(long, conflicts_with = "doc")]
    uri: Option<String>,
    #[arg(long, default_value = "default")]
    collection: String,
    #[arg(short, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "hybrid")]
    mode: SearchMode,
}

#[derive(Args)]
struct RetrainArgs {
    #[arg(long)]
    triples: PathBuf,
    /// Model output directory.
    #[arg(long = "out", alias = "model-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    epochs: u32,
    #[arg(long, default_value_t = 3e-6)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trainer executable; falls back to $VSTASH_TRAINER, then `vstash-train` on PATH.
    #[arg(long)]
    trainer: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::StoreMissing(_)
            | Error::EmptyQuery
            | Error::InvalidArgument(_)
            | Error::Limit(_)
            | Error::Parse { .. }
            | Error::DanglingQrel { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

struct Ctx {
    cli_store: Option<PathBuf>,
    cli_embedder: Option<String>,
    json: bool,
    loaded: LoadedConfig,
}

impl Ctx {
    fn config(&self) -> &CliConfig {
        &self.loaded.config
    }

    fn fusion(&self) -> FusionConfig {
        self.config().fusion.clone()
    }

    fn store_path(&self) -> Result<PathBuf, Failure> {
        self.cli_store
            .clone()
            .or_else(|| self.config().store_path.clone())
            .ok_or_else(|| Failure::usage("no store given (use --store, VSTASH_STORE or store_path in the config)"))
    }

    fn open_options(&self, create: bool) -> OpenOptions {
        OpenOptions {
            create_if_missing: create,
            limits: self.config().limits.clone(),
            ..OpenOptions::default()
        }
    }

    fn open_at(&self, path: &Path, create: bool) -> Result<Store, Failure> {
        let mut options = self.open_options(create);
        if create && !path.exists() {
            options.embedder = Some(self.embedder_selector(None));
        }
        let store = Store::open_with(path, options)?;
        if let Some(ms) = self.config().slow_query_ms {
            store.observability().slow_log.set_threshold(ms);
        }
        Ok(store)
    }

    fn open(&self, create: bool) -> Result<Store, Failure> {
        self.open_at(&self.store_path()?, create)
    }

    /// Flag, then config, then the store's recorded embedder, then `test`.
    fn embedder_selector(&self, store: Option<&Store>) -> String {
        self.cli_embedder
            .clone()
            .or_else(|| self.config().embedder.clone())
            .or_else(|| store.and_then(Store::embedder_spec))
            .unwrap_or_else(|| EmbedderSpec::default().to_string())
    }

    fn embedder(&self, store: Option<&Store>) -> Result<Box<dyn EmbeddingProvider>, Failure> {
        let spec: EmbedderSpec = self.embedder_selector(store).parse()?;
        Ok(spec.build()?)
    }

    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) -> Result<(), Failure> {
        let text = if self.json {
            serde_json::to_string_pretty(value).map_err(|e| Failure {
                code: EXIT_FAILURE,
                message: e.to_string(),
            })?
        } else {
            human()
        };
        let mut out = std::io::stdout().lock();
        writeln!(out, "{}", text.trim_end()).ok();
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let loaded = match CliConfig::discover(cli.config.as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: config: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let ctx = Ctx {
        cli_store: cli.store,
        cli_embedder: cli.embedder,
        json: cli.json,
        loaded,
    };
    let result = match cli.command {
        Cmd::Ingest(a) => cmd_ingest(&ctx, a),
        Cmd::Search(a) => cmd_search(&ctx, a),
        Cmd::Check { repair } => cmd_check(&ctx, repair),
        Cmd::Stats => cmd_stats(&ctx),
        Cmd::Eval(a) => cmd_eval(&ctx, a),
        Cmd::Mine(a) => cmd_mine(&ctx, a),
        Cmd::Bench(a) => cmd_bench(&ctx, a),
        Cmd::Miss(a) => cmd_miss(&ctx, a),
        Cmd::Retrain(a) => cmd_retrain(&ctx, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[derive(Serialize)]
struct FileStatus {
    path: String,
    status: Option<IngestStatus>,
    doc_id: Option<i64>,
    chunks: usize,
    error: Option<String>,
}

fn expand_paths(paths: &[PathBuf]) -> Vec<Result<PathBuf, (PathBuf, String)>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            for entry in WalkDir::new(p).sort_by_file_name() {
                match entry {
                    Ok(e) if e.file_type().is_file() => files.push(Ok(e.into_path())),
                    Ok(_) => {}
                    Err(e) => files.push(Err((p.clone(), e.to_string()))),
                }
            }
        } else {
            files.push(Ok(p.clone()));
        }
    }
    files
}

fn cmd_ingest(ctx: &Ctx, args: IngestArgs) -> CmdResult {
    let store = ctx.open(true)?;
    let embedder = ctx.embedder(Some(&store))?;
    if store.embedder_spec().is_none() {
        store.set_embedder_spec(&ctx.embedder_selector(None))?;
    }
    let mut statuses = Vec::new();
    for item in expand_paths(&args.paths) {
        let (path, outcome) = match item {
            Err((path, e)) => (path, Err(e)),
            Ok(path) => {
                let outcome = fs::read_to_string(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|text| {
                        let chunker = if args.code {
                            ChunkerChoice::Code(Language::from_path(&path))
                        } else if args.text {
                            ChunkerChoice::Prose
                        } else {
                            ChunkerChoice::for_path(&path)
                        };
                        let uri = path.display().to_string();
                        ingest_text(&store, embedder.as_ref(), &uri, &args.collection, &text, chunker, &args.tags)
                            .map_err(|e| e.to_string())
                    });
                (path, outcome)
            }
        };
        statuses.push(match outcome {
            Ok(o) => FileStatus {
                path: path.display().to_string(),
                status: Some(o.status),
                doc_id: Some(o.doc_id),
                chunks: o.chunks,
                error: None,
            },
            Err(e) => FileStatus {
                path: path.display().to_string(),
                status: None,
                doc_id: None,
                chunks: 0,
                error: Some(e),
            },
        });
    }
    store.checkpoint()?;
    let failed = statuses.iter().filter(|s| s.error.is_some()).count();
    let ok = statuses.len() - failed;
    ctx.emit(&json!({"files": statuses, "succeeded": ok, "failed": failed}), || {
        statuses
            .iter()
            .map(|s| match (&s.status, &s.error) {
                (Some(st), _) => format!("{}: {} ({} chunks)", s.path, st.as_str(), s.chunks),
                (None, Some(e)) => format!("{}: error: {e}", s.path),
                (None, None) => unreachable!("status or error is always set"),
            })
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    Ok(if ok == 0 { EXIT_FAILURE } else { 0 })
}

fn cmd_search(ctx: &Ctx, args: SearchArgs) -> CmdResult {
    let cfg = ctx.fusion();
    let opts = SearchOptions {
        k: args.k,
        mode: args.mode,
        boost: args.boost,
        record_telemetry: !args.no_record,
        ..SearchOptions::default()
    };
    if args.profiles.len() > 1 {
        return federated(ctx, &args, &opts, &cfg);
    }
    let store = match args.profiles.first() {
        Some(name) => ctx.open_at(&profile_path(ctx, name), false)?,
        None => ctx.open(false)?,
    };
    let embedder = ctx.embedder(Some(&store))?;
    let response = search(&store, embedder.as_ref(), &args.query, &opts, &cfg)?;
    let d = &response.diagnostics;
    let body = json!({
        "query": args.query,
        "mode": d.mode,
        "tier": d.tier,
        "best_distance": d.best_distance,
        "w_vec": d.w_vec,
        "w_fts": d.w_fts,
        "results": response.results,
    });
    ctx.emit(&body, || {
        let mut out = format!(
            "tier {} (best distance {:.4}), weights vec {:.3} / fts {:.3}\n",
            d.tier.as_str(),
            d.best_distance,
            d.w_vec,
            d.w_fts
        );
        for (i, r) in response.results.iter().enumerate() {
            let snippet: String = r.context_text.chars().take(160).collect();
            out.push_str(&format!(
                "{:>2}. chunk {} doc {} score {:.5} [{}]\n    {}\n",
                i + 1,
                r.chunk_id,
                r.doc_id,
                r.score,
                r.tier.as_str(),
                snippet.replace('\n', " ")
            ));
        }
        out
    })?;
    Ok(0)
}

fn profile_path(ctx: &Ctx, name: &str) -> PathBuf {
    ctx.config()
        .profiles
        .get(name)
        .cloned()
        .unwrap_or_else(|| PathBuf::from(name))
}

fn federated(ctx: &Ctx, args: &SearchArgs, opts: &SearchOptions, cfg: &FusionConfig) -> CmdResult {
    let mut opened = Vec::new();
    for name in &args.profiles {
        let store = ctx.open_at(&profile_path(ctx, name), false)?;
        let embedder = ctx.embedder(Some(&store))?;
        opened.push((name.clone(), store, embedder));
    }
    let profiles: Vec<Profile<'_>> = opened
        .iter()
        .map(|(name, store, embedder)| Profile {
            name: name.clone(),
            store,
            embedder: embedder.as_ref(),
        })
        .collect();
    let results = federated_search(&profiles, &args.query, opts, cfg)?;
    ctx.emit(&json!({"query": args.query, "results": results}), || {
        results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let from: Vec<&str> = r.hits.iter().map(|h| h.profile.as_str()).collect();
                let snippet: String = r.context.chars().take(160).collect();
                format!(
                    "{:>2}. score {:.5} [{}] from {}\n    {}",
                    i + 1,
                    r.score,
                    r.tier.as_str(),
                    from.join(","),
                    snippet.replace('\n', " ")
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    Ok(0)
}

fn cmd_check(ctx: &Ctx, repair: bool) -> CmdResult {
    let path = ctx.store_path()?;
    let store = match ctx.open_at(&path, false) {
        Ok(s) => s,
        Err(f) if f.code == EXIT_FAILURE => {
            // The file cannot even be opened as a store: report the
            // structural invariant as failing.
            let body = json!({
                "passed": false,
                "results": [{"invariant": Invariant::StorageStructure.as_str(), "pass": false, "offenders": [], "details": [f.message]}],
            });
            ctx.emit(&body, || format!("FAIL {}: {}", Invariant::StorageStructure.as_str(), f.message))?;
            return Ok(EXIT_FAILURE);
        }
        Err(f) => return Err(f),
    };
    let repair_report = if repair {
        let embedder = ctx.embedder(Some(&store)).ok();
        let report = store.integrity_repair(embedder.as_deref())?;
        store.checkpoint()?;
        Some(report)
    } else {
        None
    };
    let report = store.integrity_check()?;
    let mut body = json!({"passed": report.passed(), "results": report.results});
    if let Some(r) = &repair_report {
        body["repair"] = serde_json::to_value(r).expect("repair report serializes");
    }
    ctx.emit(&body, || {
        let mut out = String::new();
        if let Some(r) = &repair_report {
            out.push_str(&format!("repair: {} change(s)\n", r.changes()));
        }
        for r in &report.results {
            out.push_str(&format!(
                "{} {}{}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.invariant.as_str(),
                if r.offenders.is_empty() {
                    String::new()
                } else {
                    format!(" offenders {:?}", r.offenders)
                }
            ));
        }
        out
    })?;
    Ok(if report.passed() { 0 } else { EXIT_FAILURE })
}

fn cmd_stats(ctx: &Ctx) -> CmdResult {
    let store = ctx.open(false)?;
    let stats = store.stats()?;
    ctx.emit(&stats, || {
        let mut out = format!(
            "schema v{}\ndocuments {}\nchunks {}\nvectors {}\ndimension {}\nembedder {}\n",
            stats.schema_version,
            stats.documents,
            stats.chunks,
            stats.vectors,
            stats.dimension.map_or("-".into(), |d| d.to_string()),
            stats.embedder.as_deref().unwrap_or("-"),
        );
        for (c, n) in &stats.collections {
            out.push_str(&format!("collection {c}: {n}\n"));
        }
        for (k, n) in &stats.chunk_kinds {
            out.push_str(&format!("chunk kind {k}: {n}\n"));
        }
        out.push_str(&format!("search events {}\n", stats.search_events));
        for (tier, n, dismissed) in &stats.tier_events {
            out.push_str(&format!("tier {tier}: {n} searches, {dismissed} dismissed\n"));
        }
        out
    })?;
    Ok(0)
}

fn scratch_store(ctx: &Ctx) -> Result<(tempfile::TempDir, Store), Failure> {
    let dir = tempfile::TempDir::new().map_err(|e| Failure::from(Error::Io(e)))?;
    let store = ctx.open_at(&dir.path().join("scratch.db"), true)?;
    Ok((dir, store))
}

fn cmd_eval(ctx: &Ctx, args: EvalArgs) -> CmdResult {
    let bundle = load_beir(&args.dir)?;
    let (_dir, store) = scratch_store(ctx)?;
    let embedder = ctx.embedder(None)?;
    ingest_bundle(&store, embedder.as_ref(), &bundle, "eval")?;
    let mut cfg = ctx.fusion();
    cfg.adaptive = args.adaptive;
    let label = if args.adaptive { "adaptive" } else { "fixed" };
    let opts = EvalOptions {
        mode: args.mode,
        cfg,
        k: args.k,
        label: label.into(),
        ..EvalOptions::default()
    };
    let run = run_eval(&store, embedder.as_ref(), &bundle, &opts)?;
    ctx.emit(&run.report, || run.report.to_table())?;
    let below = args.min_ndcg.is_some_and(|min| run.report.ndcg(10) < min);
    Ok(if below { EXIT_FAILURE } else { 0 })
}

fn cmd_mine(ctx: &Ctx, args: MineArgs) -> CmdResult {
    let store = ctx.open(false)?;
    let embedder = ctx.embedder(Some(&store))?;
    let opts = MineOptions {
        queries_per_chunk: args.queries_per_chunk,
        max_chunks: args.max_chunks,
        ..MineOptions::default()
    };
    let report = mine_store(&store, embedder.as_ref(), &opts, &ctx.fusion())?;
    if !args.append && args.out.exists() {
        fs::remove_file(&args.out).map_err(|e| Failure::from(Error::Io(e)))?;
    }
    let written = export_triples(&report.triples, &args.out)?;
    let body = json!({"report": report, "triples_written": written, "out": args.out});
    ctx.emit(&body, || {
        format!(
            "queries {}\ndisagreements {} (aggregate {:.1}%, mean per group {:.1}%)\ndense blind spots {}\nlexical blind spots {}\nwrote {} triples to {}",
            report.queries,
            report.disagreements,
            report.aggregate_rate * 100.0,
            report.mean_group_rate * 100.0,
            report.dense_blind_spots,
            report.lexical_blind_spots,
            written,
            args.out.display()
        )
    })?;
    Ok(0)
}

fn cmd_bench(ctx: &Ctx, args: BenchArgs) -> CmdResult {
    let (_dir, store) = scratch_store(ctx)?;
    let embedder = EmbedderSpec::Test { dim: args.dim }.build()?;
    let bundle = synthetic_bundle(&SyntheticSpec {
        seed: args.seed,
        ..SyntheticSpec::default()
    });
    ingest_bundle(&store, embedder.as_ref(), &bundle, "fixture")?;
    let opts = ScaleOptions {
        sizes: args.chunks,
        n_queries: args.queries,
        seed: args.seed,
        cfg: ctx.fusion(),
        ..ScaleOptions::default()
    };
    let report = scale_benchmark(&store, embedder.as_ref(), &bundle, &opts)?;
    ctx.emit(&report, || {
        let mut out = format!(
            "{:>8} {:>6} {:>9} {:>9} {:>9} {:>8}\n",
            "chunks", "dim", "p50 ms", "p95 ms", "p99 ms", "ndcg@10"
        );
        for r in &report.rows {
            out.push_str(&format!(
                "{:>8} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>8.4}\n",
                r.n_chunks, r.dim, r.latency_ms.p50, r.latency_ms.p95, r.latency_ms.p99, r.ndcg_at_10
            ));
        }
        out.push_str(&format!("ndcg drift {:.4}\n", report.ndcg_drift));
        out
    })?;
    Ok(0)
}

fn cmd_miss(ctx: &Ctx, args: MissArgs) -> CmdResult {
    let store = ctx.open(false)?;
    let embedder = ctx.embedder(Some(&store))?;
    let doc_id = match (args.doc, &args.uri) {
        (Some(id), _) => id,
        (None, Some(uri)) => store
            .document_by_source(uri, &args.collection)?
            .map(|d| d.doc_id)
            .ok_or_else(|| Failure::usage(format!("no document {uri:?} in collection {:?}", args.collection)))?,
        (None, None) => return Err(Failure::usage("give --doc or --uri")),
    };
    let opts = SearchOptions {
        k: args.k,
        mode: args.mode,
        ..SearchOptions::default()
    }
    .read_only();
    let report = miss_analysis(&store, embedder.as_ref(), &args.query, doc_id, &opts, &ctx.fusion())?;
    ctx.emit(&report, || {
        let mut out = format!("verdict: {}\n", serde_json::to_value(report.verdict).expect("verdict").as_str().unwrap_or("?"));
        for s in &report.suggestions {
            out.push_str(&format!("suggestion: {s}\n"));
        }
        out
    })?;
    Ok(0)
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|dir| dir.join(name))
            .find(|candidate| candidate.is_file())
    })
}

fn cmd_retrain(ctx: &Ctx, args: RetrainArgs) -> CmdResult {
    let trainer = args
        .trainer
        .clone()
        .or_else(|| std::env::var_os("VSTASH_TRAINER").map(PathBuf::from))
        .or_else(|| find_on_path(DEFAULT_TRAINER))
        .filter(|p| p.is_file());
    let Some(trainer) = trainer else {
        return Err(Failure {
            code: EXIT_MISSING_COMPONENT,
            message: format!(
                "trainer component not found: install `{DEFAULT_TRAINER}` on PATH, set VSTASH_TRAINER or pass --trainer"
            ),
        });
    };
    if !args.triples.is_file() {
        return Err(Failure::usage(format!("triples file {} not found", args.triples.display())));
    }
    let store = ctx.open(false)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::from(Error::Io(e)))?;
    export_chunk_texts(&store, &args.out.join("chunks.jsonl"))?;
    let status = Command::new(&trainer)
        .arg("--triples")
        .arg(&args.triples)
        .arg("--out")
        .arg(&args.out)
        .args(["--epochs", &args.epochs.to_string()])
        .args(["--lr", &args.lr.to_string()])
        .args(["--batch", &args.batch.to_string()])
        .args(["--seed", &args.seed.to_string()])
        .status()
        .map_err(|e| Failure {
            code: EXIT_MISSING_COMPONENT,
            message: format!("cannot run trainer {}: {e}", trainer.display()),
        })?;
    if !status.success() {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: format!("trainer exited with {status}; store unchanged"),
        });
    }
    let vectors = args.out.join("vectors.tsv");
    if !vectors.is_file() {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: format!("trainer wrote no {}; store unchanged", vectors.display()),
        });
    }
    let provider = load_precomputed(&vectors)?;
    let spec = EmbedderSpec::Precomputed(vectors.clone()).to_string();
    let n = store.replace_vectors(&provider, &spec)?;
    store.checkpoint()?;
    ctx.emit(&json!({"reembedded": n, "embedder": spec}), || {
        format!("re-embedded {n} chunks with {spec}")
    })?;
    Ok(0)
}

/// Writes `{digest, text}` lines for every chunk, so the trainer can emit
/// vectors keyed the way the precomputed provider reads them.
fn export_chunk_texts(store: &Store, path: &Path) -> Result<(), Failure> {
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Failure::from(Error::Io(e)))?);
    for c in store.all_chunks()? {
        let line = json!({"digest": content_digest(&c.text), "text": c.text});
        writeln!(out, "{line}").map_err(|e| Failure::from(Error::Io(e)))?;
    }
    out.flush().map_err(|e| Failure::from(Error::Io(e)))?;
    Ok(())
}
