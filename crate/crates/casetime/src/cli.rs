//! Command-line wiring for the pipeline stages.
//!
//! Subcommands: `extract` (corpus scan to manifest), `sample` (seeded
//! manifest sampling), `annotate` (reports to timelines via a chat
//! endpoint, or fixtures offline), `match` (alignment audits between two
//! timeline sets), `evaluate` (reference vs candidate), `agree` (candidate
//! vs candidate), and `report` (per-report evaluations to a corpus
//! summary). Usage errors exit 2; runtime errors print one machine-parsable
//! JSON record to stderr and exit 1.

use clap::{Args, Parser, Subcommand};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::chat::{
    annotate_corpus, CachingTransport, ChatError, ChatTransport, ExchangeCache, FixtureTransport,
    HttpChatTransport, LlmConfig, PacedTransport, CHAT_URL_ENV,
};
use crate::corpus::{
    parse_article_body, read_manifest, sample_reports, scan_corpus, write_manifest, CaseReport,
    CaseReportFilter, CorpusError, SAMPLE_PRNG,
};
use crate::embed::{Embedder, HttpEmbedder, TrigramEmbedder};
use crate::matching::{
    audit_rows, build_distance_matrix, export_match_candidates, recursive_best_match_traced,
    write_match_audit, write_match_candidates, AuditRow, DistanceMetric, DistanceWindow,
    MatchCandidate, MatchError,
};
use crate::metrics::{match_rate_curve, time_distribution, SubgroupEdges, TimeBucket};
use crate::prompt::{base_prompt, CharsPerToken, PromptError, TokenEstimator};
use crate::report::{
    aggregate, emit_json, emit_tables, evaluate_pair, load_eval_report, EvalConfig, EvalMode,
    EvalReport, ReportError,
};
use crate::timeline::{
    descriptive_stats, read_timeline_csv, write_stats_table, write_timeline, Timeline,
    TimelineError, MANUAL_ANNOTATOR,
};
use crate::util::{atomic_write, sha256_hex};

/// Environment variable overriding the embedding endpoint URL.
pub const EMBED_URL_ENV: &str = "CASETIME_EMBED_URL";
/// Environment variable naming the embedding model.
pub const EMBED_MODEL_ENV: &str = "CASETIME_EMBED_MODEL";

#[derive(Parser)]
#[command(
    name = "casetime",
    version,
    about = "Relative clinical timelines from case-report corpora: extract, annotate, match, evaluate",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Force offline backends: trigram embedder and fixture transports.
    #[arg(long, global = true)]
    offline: bool,
    /// Print per-file diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a corpus tree for eligible case reports and write a manifest.
    Extract {
        /// Directory of PMOA-style flat-text articles.
        #[arg(long)]
        root: PathBuf,
        /// Manifest path (tab-separated: id, source_path, body_char_count).
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a reproducible random sample of manifest rows.
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        /// Sample size (must not exceed the manifest row count).
        #[arg(long)]
        n: usize,
        /// PRNG seed; identical seeds redraw identical samples.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output manifest subset; sampling metadata goes to `<out>.meta.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotate case reports into timelines via a chat-completion endpoint.
    Annotate(AnnotateArgs),
    /// Align two timeline sets and export match audits, candidates, and
    /// match-rate curves.
    Match(MatchArgs),
    /// Evaluate candidate timelines against manual reference annotations.
    Evaluate(EvaluateArgs),
    /// Inter-annotator agreement between two candidate timeline sets.
    Agree(AgreeArgs),
    /// Aggregate per-report evaluation JSONs into a corpus summary.
    Report {
        /// Directory of EvalReport JSON documents.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Model name sent to the endpoint and used as the annotator tag
    /// (`-feedback` is appended when feedback rounds are on).
    #[arg(long, default_value = "gpt-4")]
    model: String,
    /// Feedback rounds after the opening request (the feedback strategy
    /// uses 2).
    #[arg(long, default_value_t = 0)]
    feedback_rounds: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Token budget for prompt plus response reserve.
    #[arg(long, default_value_t = 8192)]
    token_limit: usize,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Chat endpoint URL; defaults to $CASETIME_CHAT_URL or the OpenAI
    /// chat-completions endpoint. Credentials come from $CASETIME_API_KEY.
    #[arg(long)]
    endpoint: Option<String>,
    /// Bound on concurrent in-flight reports.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Minimum milliseconds between request starts (rate limit).
    #[arg(long, default_value_t = 0)]
    min_interval_ms: u64,
    /// Directory of canned responses for --offline runs
    /// (`<report_id>.txt` or `<report_id>.r<round>.txt`).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Exchange cache directory; defaults to `<out-dir>/cache`.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct BackendArgs {
    /// Distance metric for event matching.
    #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
    metric: MetricArg,
    /// Match threshold: pairs above it are never matched. The default is
    /// calibrated for cosine distances; pick a length-appropriate value for
    /// Levenshtein.
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Remote embedding endpoint; defaults to $CASETIME_EMBED_URL. Without
    /// one (or with --offline) the trigram fallback embedder is used.
    #[arg(long)]
    embed_url: Option<String>,
    /// Embedding model name; defaults to $CASETIME_EMBED_MODEL.
    #[arg(long)]
    embed_model: Option<String>,
    /// Embedding cache directory.
    #[arg(long)]
    embed_cache: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MetricArg {
    Cosine,
    Levenshtein,
}

impl From<MetricArg> for DistanceMetric {
    fn from(value: MetricArg) -> Self {
        match value {
            MetricArg::Cosine => DistanceMetric::CosineEmbedding,
            MetricArg::Levenshtein => DistanceMetric::Levenshtein,
        }
    }
}

#[derive(Args)]
struct MatchArgs {
    /// Timeline CSV directory for side A (the match-rate denominator).
    #[arg(long)]
    side_a: PathBuf,
    /// Timeline CSV directory for side B.
    #[arg(long)]
    side_b: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Lower edge of the candidate review window.
    #[arg(long, default_value_t = 0.0)]
    window_lo: f64,
    /// Upper edge of the candidate review window.
    #[arg(long, default_value_t = 0.15)]
    window_hi: f64,
    /// Thresholds for the match-rate curve, ascending.
    #[arg(long, value_delimiter = ',', num_args = 1..,
          default_values_t = vec![0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5])]
    curve_thresholds: Vec<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of reference annotation CSVs (annotator `manual`).
    #[arg(long)]
    reference: PathBuf,
    /// Directory of candidate timeline CSVs (`<id>.<annotator>.csv`).
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct AgreeArgs {
    /// First candidate set; plays the reference role (denominator).
    #[arg(long)]
    side_a: PathBuf,
    /// Second candidate set.
    #[arg(long)]
    side_b: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

/// Runtime failure with a stable kind tag for the machine-parsable error
/// record.
#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let kind = match &e {
            CorpusError::MissingBodyMarker => "MissingBodyMarker",
            CorpusError::InvalidRoot(_) => "InvalidRoot",
            CorpusError::SampleTooLarge { .. } => "SampleTooLarge",
            CorpusError::Io { .. } => "IoError",
            CorpusError::MalformedManifest { .. } => "MalformedManifest",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<TimelineError> for CliError {
    fn from(e: TimelineError) -> Self {
        let kind = match &e {
            TimelineError::EmptyTimeline { .. } => "EmptyTimeline",
            TimelineError::MalformedRow { .. } => "MalformedRow",
            TimelineError::Io { .. } => "IoError",
            TimelineError::Csv { .. } => "CsvError",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<ChatError> for CliError {
    fn from(e: ChatError) -> Self {
        let kind = match &e {
            ChatError::Transport { .. } | ChatError::TemperatureRejected(_) => "TransportError",
            ChatError::Auth(_) => "AuthError",
            ChatError::Timeout(_) => "TimeoutError",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        let kind = match &e {
            PromptError::MissingField(_) => "MissingField",
            PromptError::BudgetTooSmall { .. } => "BudgetTooSmall",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<crate::chat::AnnotateError> for CliError {
    fn from(e: crate::chat::AnnotateError) -> Self {
        match e {
            crate::chat::AnnotateError::Prompt(inner) => inner.into(),
            crate::chat::AnnotateError::Chat(inner) => inner.into(),
            crate::chat::AnnotateError::Timeline(inner) => inner.into(),
        }
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        let kind = match &e {
            MatchError::EmptyEventList => "EmptyEventList",
            MatchError::MissingBackend => "MissingBackend",
            MatchError::Embed(crate::embed::EmbedError::Transport(_)) => "TransportError",
            MatchError::Embed(_) => "EmbedError",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Match(inner) => inner.into(),
            ReportError::MismatchedReport { .. } => CliError::new("MismatchedReport", e.to_string()),
            ReportError::HeterogeneousConfig => CliError::new("HeterogeneousConfig", e.to_string()),
            ReportError::EmptyInput => CliError::new("EmptyInput", e.to_string()),
            ReportError::Io { .. } => CliError::new("IoError", e.to_string()),
            ReportError::Json { .. } => CliError::new("JsonError", e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("IoError", e.to_string())
    }
}

/// Parse `argv` and run the selected subcommand. Returns the process exit
/// code: 0 on success, 1 on runtime failure (after printing a single-line
/// JSON error record to stderr), 2 on usage errors.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Extract { root, out } => cmd_extract(root, out, cli.verbose),
        Command::Sample {
            manifest,
            n,
            seed,
            out,
        } => cmd_sample(manifest, *n, *seed, out),
        Command::Annotate(args) => cmd_annotate(args, cli.offline, cli.verbose),
        Command::Match(args) => cmd_match(args, cli.offline),
        Command::Evaluate(args) => cmd_evaluate(args, cli.offline, cli.verbose),
        Command::Agree(args) => cmd_agree(args, cli.offline, cli.verbose),
        Command::Report { reports, out_dir } => cmd_report(reports, out_dir),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": { "kind": e.kind, "message": e.message } })
            );
            1
        }
    }
}

fn cmd_extract(root: &Path, out: &Path, verbose: bool) -> Result<(), CliError> {
    let outcome = scan_corpus(root, &CaseReportFilter::default())?;
    if verbose {
        for d in &outcome.diagnostics {
            eprintln!("{}: {:?}: {}", d.path, d.kind, d.detail);
        }
    }
    write_manifest(&outcome.reports, out)?;
    println!(
        "{} eligible case reports ({} diagnostics) -> {}",
        outcome.reports.len(),
        outcome.diagnostics.len(),
        out.display()
    );
    Ok(())
}

fn cmd_sample(manifest: &Path, n: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let rows = read_manifest(manifest)?;
    let mut ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    ids.sort();
    ids.dedup();
    let sampled = sample_reports(&ids, n, seed)?;
    let by_id: BTreeMap<&str, &crate::corpus::ManifestEntry> =
        rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let reports: Vec<CaseReport> = sampled
        .iter()
        .map(|id| {
            let row = by_id[id.as_str()];
            CaseReport {
                id: row.id.clone(),
                body: String::new(),
                source_path: row.source_path.clone(),
                body_char_count: row.body_char_count,
            }
        })
        .collect();
    write_manifest(&reports, out)?;
    let meta = serde_json::json!({
        "prng": SAMPLE_PRNG,
        "seed": seed,
        "n": n,
        "available": ids.len(),
        "manifest": manifest.display().to_string(),
    });
    let meta_path = out.with_extension("meta.json");
    atomic_write(&meta_path, format!("{meta:#}\n").as_bytes())?;
    println!("sampled {} of {} ids -> {}", n, ids.len(), out.display());
    Ok(())
}

fn cmd_annotate(args: &AnnotateArgs, offline: bool, verbose: bool) -> Result<(), CliError> {
    let rows = read_manifest(&args.manifest)?;
    let mut reports = Vec::new();
    for row in &rows {
        let raw = std::fs::read_to_string(&row.source_path).map_err(|e| {
            CliError::new("IoError", format!("{}: {e}", row.source_path))
        })?;
        let parsed = parse_article_body(&raw)?;
        reports.push(CaseReport::new(
            row.id.clone(),
            parsed.text,
            row.source_path.clone(),
        ));
    }

    let config = LlmConfig {
        model_name: args.model.clone(),
        temperature: args.temperature,
        token_limit: args.token_limit,
        feedback_rounds: args.feedback_rounds,
        endpoint_url: args
            .endpoint
            .clone()
            .or_else(|| std::env::var(CHAT_URL_ENV).ok())
            .unwrap_or_else(|| "https://api.openai.com/v1/chat/completions".into()),
        max_retries: args.max_retries,
        request_timeout: Duration::from_secs(args.timeout_secs),
        retry_backoff: Duration::from_millis(500),
    };

    let base: Box<dyn ChatTransport> = if offline {
        let fixture = match &args.fixtures {
            Some(dir) => FixtureTransport::from_dir(dir),
            None => FixtureTransport::default(),
        };
        Box::new(fixture)
    } else {
        Box::new(HttpChatTransport::from_env(config.request_timeout))
    };
    let paced;
    let transport: &dyn ChatTransport = if args.min_interval_ms > 0 {
        paced = PacedTransport::new(base.as_ref(), Duration::from_millis(args.min_interval_ms));
        &paced
    } else {
        base.as_ref()
    };
    let cache_dir = args
        .cache_dir
        .clone()
        .unwrap_or_else(|| args.out_dir.join("cache"));
    let cache = ExchangeCache::new(cache_dir);
    let caching = CachingTransport::new(transport, &cache, &config);

    let estimator = CharsPerToken::default();
    let annotator = config.annotator_tag();
    let results = annotate_corpus(reports, &config, &caching, args.workers.max(1));

    let timelines_dir = args.out_dir.join("timelines");
    let mut written = 0usize;
    let mut first_error: Option<CliError> = None;
    for (report_id, outcome) in results {
        match outcome {
            Ok(outcome) => {
                let path = timelines_dir.join(format!(
                    "{}.{}.csv",
                    sanitize_component(&report_id),
                    sanitize_component(&annotator)
                ));
                write_timeline(&outcome.timeline, &path)?;
                written += 1;
                if verbose {
                    eprintln!(
                        "{report_id}: {} events over {} exchange(s)",
                        outcome.timeline.events.len(),
                        outcome.exchanges.len()
                    );
                }
            }
            Err(e) => {
                if verbose {
                    eprintln!("{report_id}: failed: {e}");
                }
                if first_error.is_none() {
                    first_error = Some(e.into());
                }
            }
        }
    }

    let meta = serde_json::json!({
        "model": config.model_name,
        "annotator": annotator,
        "temperature": config.temperature,
        "token_limit": config.token_limit,
        "feedback_rounds": config.feedback_rounds,
        "estimator": estimator.name(),
        "prompt_digest": sha256_hex(&[base_prompt()]),
        "config_digest": config.digest(),
        "offline": offline,
    });
    atomic_write(
        &args.out_dir.join("run_meta.json"),
        format!("{meta:#}\n").as_bytes(),
    )?;

    match first_error {
        Some(e) => Err(e),
        None => {
            println!("annotated {written} reports -> {}", timelines_dir.display());
            Ok(())
        }
    }
}

fn build_embedder(backend: &BackendArgs, offline: bool) -> Box<dyn Embedder> {
    if offline {
        return Box::new(TrigramEmbedder);
    }
    let url = backend
        .embed_url
        .clone()
        .or_else(|| std::env::var(EMBED_URL_ENV).ok());
    let model = backend
        .embed_model
        .clone()
        .or_else(|| std::env::var(EMBED_MODEL_ENV).ok());
    match (url, model) {
        (Some(url), Some(model)) => {
            let mut embedder = HttpEmbedder::new(url, model);
            if let Ok(key) = std::env::var(crate::chat::API_KEY_ENV)
                .or_else(|_| std::env::var(crate::chat::API_KEY_ENV_FALLBACK))
            {
                embedder = embedder.with_api_key(key);
            }
            if let Some(dir) = &backend.embed_cache {
                embedder = embedder.with_cache_dir(dir);
            }
            Box::new(embedder)
        }
        _ => Box::new(TrigramEmbedder),
    }
}

/// Make an annotator or id safe to embed in a file name.
fn sanitize_component(tag: &str) -> String {
    tag.replace(['/', '\\'], "-")
}

/// Read every `*.csv` under `dir` as a timeline. File names are
/// `<report_id>.csv` (annotator = `default_annotator`) or
/// `<report_id>.<annotator>.csv`; report ids must not contain dots. A
/// duplicate report id keeps the lexicographically first file and warns.
fn load_timeline_dir(
    dir: &Path,
    default_annotator: &str,
) -> Result<BTreeMap<String, Timeline>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::new("IoError", format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for path in paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (id, annotator) = match stem.split_once('.') {
            Some((id, annotator)) => (id.to_string(), annotator.to_string()),
            None => (stem, default_annotator.to_string()),
        };
        if out.contains_key(&id) {
            eprintln!("{}: duplicate report id {id}; keeping the first file", path.display());
            continue;
        }
        let timeline = read_timeline_csv(&path, &id, &annotator)?;
        out.insert(id, timeline);
    }
    Ok(out)
}

fn common_ids<A, B>(a: &BTreeMap<String, A>, b: &BTreeMap<String, B>, verbose: bool) -> Vec<String> {
    let ids_a: BTreeSet<&String> = a.keys().collect();
    let ids_b: BTreeSet<&String> = b.keys().collect();
    if verbose {
        for only in ids_a.symmetric_difference(&ids_b) {
            eprintln!("{only}: present on one side only; skipped");
        }
    }
    ids_a.intersection(&ids_b).map(|s| s.to_string()).collect()
}

fn cmd_match(args: &MatchArgs, offline: bool) -> Result<(), CliError> {
    let side_a = load_timeline_dir(&args.side_a, MANUAL_ANNOTATOR)?;
    let side_b = load_timeline_dir(&args.side_b, "candidate")?;
    let ids = common_ids(&side_a, &side_b, true);
    if ids.is_empty() {
        return Err(CliError::new("EmptyInput", "no report ids shared by both sides"));
    }
    let embedder = build_embedder(&args.backend, offline);
    let metric: DistanceMetric = args.backend.metric.into();
    let window = DistanceWindow {
        lo: args.window_lo,
        hi: args.window_hi,
    };
    let mut thresholds = args.curve_thresholds.clone();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut all_audit: Vec<AuditRow> = Vec::new();
    let mut all_candidates: Vec<(String, MatchCandidate)> = Vec::new();
    let mut curve_rows = String::from("report_id\tthreshold\tmatch_rate\n");
    for id in &ids {
        let (a, b) = (&side_a[id], &side_b[id]);
        let matrix = build_distance_matrix(&a.events, &b.events, metric, Some(embedder.as_ref()))?;
        let (_, trace) = recursive_best_match_traced(&matrix, args.backend.threshold);
        all_audit.extend(audit_rows(id, &a.events, &b.events, &trace));
        for candidate in export_match_candidates(&a.events, &b.events, &matrix, window) {
            all_candidates.push((id.clone(), candidate));
        }
        for point in match_rate_curve(&matrix, a.events.len(), &thresholds) {
            curve_rows.push_str(&format!("{id}\t{}\t{}\n", point.threshold, point.match_rate));
        }
    }
    all_candidates.sort_by(|(ia, ca), (ib, cb)| {
        ca.distance
            .partial_cmp(&cb.distance)
            .unwrap()
            .then(ia.cmp(ib))
            .then(ca.index_a.cmp(&cb.index_a))
    });

    std::fs::create_dir_all(&args.out_dir)?;
    write_match_audit(&all_audit, &args.out_dir.join("match_audit.tsv"))?;
    write_match_candidates(&all_candidates, &args.out_dir.join("match_candidates.tsv"))?;
    atomic_write(&args.out_dir.join("match_rate_curve.tsv"), curve_rows.as_bytes())?;
    let provenance = serde_json::json!({
        "metric": metric.to_string(),
        "threshold": args.backend.threshold,
        "embedder_tag": embedder.backend_tag(),
        "window": { "lo": window.lo, "hi": window.hi },
        "curve_thresholds": thresholds,
        "report_count": ids.len(),
    });
    atomic_write(
        &args.out_dir.join("provenance.json"),
        format!("{provenance:#}\n").as_bytes(),
    )?;
    println!(
        "matched {} report pairs -> {}",
        ids.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, offline: bool, verbose: bool) -> Result<(), CliError> {
    let reference = load_timeline_dir(&args.reference, MANUAL_ANNOTATOR)?;
    let candidate = load_timeline_dir(&args.candidate, "candidate")?;
    run_evaluation(
        reference,
        candidate,
        EvalMode::ReferenceVsCandidate,
        &args.backend,
        &args.out_dir,
        offline,
        verbose,
    )
}

fn cmd_agree(args: &AgreeArgs, offline: bool, verbose: bool) -> Result<(), CliError> {
    let side_a = load_timeline_dir(&args.side_a, "candidate-a")?;
    let side_b = load_timeline_dir(&args.side_b, "candidate-b")?;
    run_evaluation(
        side_a,
        side_b,
        EvalMode::InterLlm,
        &args.backend,
        &args.out_dir,
        offline,
        verbose,
    )
}

fn run_evaluation(
    side_a: BTreeMap<String, Timeline>,
    side_b: BTreeMap<String, Timeline>,
    mode: EvalMode,
    backend: &BackendArgs,
    out_dir: &Path,
    offline: bool,
    verbose: bool,
) -> Result<(), CliError> {
    let ids = common_ids(&side_a, &side_b, verbose);
    if ids.is_empty() {
        return Err(CliError::new("EmptyInput", "no report ids shared by both sides"));
    }
    let embedder = build_embedder(backend, offline);
    let config = EvalConfig {
        threshold: backend.threshold,
        metric: backend.metric.into(),
        embedder_tag: embedder.backend_tag().to_string(),
        prompt_digest: None,
        edges: SubgroupEdges::default(),
    };

    let reports_dir = out_dir.join("reports");
    std::fs::create_dir_all(&reports_dir)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for id in &ids {
        let (a, b) = (&side_a[id], &side_b[id]);
        let report = evaluate_pair(a, b, mode, &config, Some(embedder.as_ref()))?;
        emit_json(
            &report,
            &reports_dir.join(format!(
                "{}.{}-vs-{}.json",
                sanitize_component(id),
                sanitize_component(&report.side_a),
                sanitize_component(&report.side_b)
            )),
        )?;
        reports.push(report);
    }

    let summary = aggregate(&reports)?;
    emit_json(&summary, &out_dir.join("summary.json"))?;
    let tables_dir = out_dir.join("tables");
    std::fs::create_dir_all(&tables_dir)?;
    emit_tables(&summary, &reports, &tables_dir)?;

    // Descriptive statistics and reference-side time distribution over the
    // loaded timelines.
    let timelines: Vec<Timeline> = side_a.values().chain(side_b.values()).cloned().collect();
    let stats = descriptive_stats(&timelines);
    write_stats_table(&stats, &tables_dir.join("annotation_stats.tsv"))?;
    write_time_distribution_table(
        side_a.values(),
        &tables_dir.join("time_distribution.tsv"),
    )?;

    println!(
        "evaluated {} report pairs -> {}",
        ids.len(),
        out_dir.display()
    );
    Ok(())
}

/// Pooled per-annotator histogram of |time| over the subgroup buckets.
fn write_time_distribution_table<'a>(
    timelines: impl Iterator<Item = &'a Timeline>,
    path: &Path,
) -> Result<(), CliError> {
    let edges = SubgroupEdges::default();
    let mut pooled: BTreeMap<String, (usize, Vec<usize>)> = BTreeMap::new();
    for timeline in timelines {
        let dist = match time_distribution(timeline, &edges) {
            Ok(dist) => dist,
            Err(_) => continue,
        };
        let entry = pooled
            .entry(timeline.annotator.clone())
            .or_insert_with(|| (0, vec![0; TimeBucket::ALL.len()]));
        entry.0 += dist.total;
        for (slot, bucket) in entry.1.iter_mut().zip(&dist.buckets) {
            *slot += bucket.count;
        }
    }
    let mut out = String::from("annotator\tbucket\tcount\tfraction\n");
    for (annotator, (total, counts)) in &pooled {
        for (bucket, count) in TimeBucket::ALL.iter().zip(counts) {
            out.push_str(&format!(
                "{annotator}\t{}\t{count}\t{}\n",
                bucket.label(),
                *count as f64 / *total as f64
            ));
        }
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

fn cmd_report(reports_dir: &Path, out_dir: &Path) -> Result<(), CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(reports_dir)
        .map_err(|e| CliError::new("IoError", format!("{}: {e}", reports_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut reports = Vec::new();
    for path in paths {
        reports.push(load_eval_report(&path)?);
    }
    let summary = aggregate(&reports)?;
    std::fs::create_dir_all(out_dir)?;
    emit_json(&summary, &out_dir.join("summary.json"))?;
    let tables_dir = out_dir.join("tables");
    std::fs::create_dir_all(&tables_dir)?;
    emit_tables(&summary, &reports, &tables_dir)?;
    println!(
        "aggregated {} evaluation reports -> {}",
        reports.len(),
        out_dir.display()
    );
    Ok(())
}
