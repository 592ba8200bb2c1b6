//! `semgate` command-line front end.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semgate_core::backends::{set_log_content, ModelClient};
use semgate_core::config::{load_config, Config, DistillOptions};
use semgate_core::corpus;
use semgate_core::distill::{self, DistillClients, DistillError, DistillJob, Source};
use semgate_core::eval::{self, AnyReport, ExperimentOptions, Mode};
use semgate_core::gateway::{self, Gateway};
use semgate_core::listgen::{self, ListGenConfig};
use semgate_core::metrics::Task;
use semgate_core::prompts::PromptSet;
use semgate_core::secrecy::SecrecySystem;
use semgate_core::store::{PurgeFilter, SessionStore};

/// Exit status when a job stopped early but wrote partial results.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "semgate", version, about = "Semantic-encryption privacy gateway and toolchain")]
struct Cli {
    /// Include request and response texts in debug logs.
    #[arg(long, global = true)]
    log_content: bool,

    /// Log filter (overrides RUST_LOG), e.g. `info` or `semgate_core=debug`.
    #[arg(long, global = true)]
    log: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit random number lists as JSONL.
    Listgen(ListgenArgs),
    /// Emit a templated arithmetic dataset as JSONL.
    Corpus(CorpusArgs),
    /// Build encoder and decoder training files.
    Distill(DistillArgs),
    /// Run the gateway HTTP service.
    Serve(ServeArgs),
    /// Score a pair file.
    Eval(EvalArgs),
    /// Run a dataset through the pipeline and report.
    Run(RunArgs),
    /// Score transforms with the judge model.
    Judge(JudgeArgs),
    /// Remove stored sessions.
    Purge(PurgeArgs),
    /// Tabulate report files side by side.
    Report(ReportArgs),
    /// Analyze a finite secrecy system.
    Secrecy(SecrecyArgs),
}

#[derive(Args, Debug)]
struct ListgenArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long)]
    n_min: Option<u32>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    v_min: Option<f64>,
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long)]
    decimals: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Take unspecified settings from this config's `listgen` table.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceKind {
    Synthetic,
    Dataset,
}

#[derive(Args, Debug)]
struct DistillArgs {
    #[arg(long, value_enum)]
    source: SourceKind,
    /// Dataset JSONL (with `--source dataset`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Number of synthetic items (with `--source synthetic`).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    question_field: Option<String>,
    #[arg(long)]
    label_field: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Process at most this many new items, leaving the rest for a rerun.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `gateway.listen_addr`.
    #[arg(long)]
    listen: Option<SocketAddr>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Utility,
    Experience,
    Privacy,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Utility => Mode::Utility,
            ModeArg::Experience => Mode::Experience,
            ModeArg::Privacy => Mode::Privacy,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Math,
    Nli,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Math => Task::MathNumeric,
            TaskArg::Nli => Task::NliLabel,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "math")]
    task: TaskArg,
    #[arg(long)]
    out: PathBuf,
    /// Row label in tables.
    #[arg(long, default_value = "pairs")]
    method: String,
    /// Read `metrics` settings from this config.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "math")]
    task: TaskArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "semantic_encryption")]
    method: String,
    #[arg(long)]
    question_field: Option<String>,
    /// Label field; defaults to `distill.label_field` or `answer`.
    #[arg(long)]
    label_field: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct JudgeArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSONL with `t_o`, `t_hat_o` and optional `t_r` (or `input`/`target`).
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "semantic_encryption")]
    method: String,
}

#[derive(Args, Debug)]
struct PurgeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Store file (overrides the config's `store.path`).
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, conflicts_with = "older_than")]
    all: bool,
    /// Remove sessions created longer ago than this (`30d`, `12h`, `0`).
    #[arg(long)]
    older_than: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Also write the table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SecrecyArgs {
    #[arg(long)]
    system: PathBuf,
    /// Exact enumeration (default when `--trials` is absent).
    #[arg(long)]
    exact: bool,
    /// Monte-Carlo trials for the empirical estimate.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample the payload too and estimate I(M;C,N).
    #[arg(long)]
    include_payload: bool,
}

fn init_logging(filter: Option<&str>) {
    let env = match filter {
        Some(f) => tracing_subscriber::EnvFilter::new(f),
        None => tracing_subscriber::EnvFilter::try_from_default_env()
            .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
    };
    tracing_subscriber::fmt()
        .with_env_filter(env)
        .with_writer(std::io::stderr)
        .init();
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn config(path: &Path) -> Result<Config> {
    load_config(path).with_context(|| format!("loading config {}", path.display()))
}

fn dataset_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Write the JSON report and its table (`<out>.txt`), print the table.
fn emit_report(out: &Path, report: &AnyReport) -> Result<()> {
    write_or_print(Some(out), &report.to_json())?;
    let table = eval::render_table(std::slice::from_ref(report));
    write_or_print(Some(&out.with_extension("txt")), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_listgen(a: ListgenArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => config(p)?.listgen,
        None => ListGenConfig::default(),
    };
    if let Some(v) = a.n_min {
        cfg.n_min = v;
    }
    if let Some(v) = a.n_max {
        cfg.n_max = v;
    }
    if let Some(v) = a.v_min {
        cfg.v_min = v;
    }
    if let Some(v) = a.v_max {
        cfg.v_max = v;
    }
    if let Some(v) = a.decimals {
        cfg.decimals = v;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    let text = listgen::render_jsonl(&cfg, a.count)?;
    write_or_print(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_corpus(a: CorpusArgs) -> Result<ExitCode> {
    let items = corpus::generate_corpus(a.count, a.seed);
    write_or_print(a.out.as_deref(), &corpus::render_jsonl(&items))?;
    Ok(ExitCode::SUCCESS)
}

async fn cmd_distill(a: DistillArgs) -> Result<ExitCode> {
    let cfg = config(&a.config)?;
    let source = match a.source {
        SourceKind::Synthetic => Source::Synthetic {
            listgen: cfg.listgen.clone(),
            count: a.count.context("--source synthetic needs --count")?,
        },
        SourceKind::Dataset => Source::Dataset {
            path: a.dataset.clone().context("--source dataset needs --dataset")?,
        },
    };
    let mut options: DistillOptions = cfg.distill.clone();
    if let Some(f) = a.question_field {
        options.question_field = f;
    }
    if a.label_field.is_some() {
        options.label_field = a.label_field;
    }
    if let Some(s) = a.seed {
        options.seed = s;
    }
    if let Some(p) = a.parallelism {
        options.parallelism = p;
    }
    let job = DistillJob {
        source,
        out_dir: a.out,
        options,
        limit: a.limit,
    };
    let clients = DistillClients::from_config(&cfg)?;
    match distill::run_distill(&job, &clients, &cfg.prompts).await {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(if summary.finished { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
        }
        Err(DistillError::Aborted { summary, .. }) => {
            println!("{}", serde_json::to_string_pretty(&summary)?);
            eprintln!("distillation aborted: failure ratio above tolerance");
            Ok(ExitCode::from(EXIT_PARTIAL))
        }
        Err(e) => Err(e.into()),
    }
}

async fn cmd_serve(a: ServeArgs) -> Result<ExitCode> {
    let cfg = config(&a.config)?;
    let store = Arc::new(
        SessionStore::open(&cfg.store_path).with_context(|| format!("opening store {}", cfg.store_path.display()))?,
    );
    if store.recovery().dropped_trailing_line {
        tracing::warn!("store recovery dropped a torn trailing line");
    }
    let gw = Arc::new(Gateway::from_config(&cfg, store)?);
    let addr = a.listen.unwrap_or(cfg.gateway.listen_addr);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("semgate listening on http://{}", listener.local_addr()?);
    gateway::http::serve(gw, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let metrics = match &a.config {
        Some(p) => config(p)?.metrics,
        None => Default::default(),
    };
    let pairs = eval::load_text_pairs(&a.pairs)?;
    let report = AnyReport::Similarity(eval::pair_similarity(
        &pairs,
        a.mode.into(),
        a.task.into(),
        &a.method,
        &dataset_name(&a.pairs),
        metrics.parallelism,
        metrics.meteor_search_budget,
    ));
    emit_report(&a.out, &report)?;
    Ok(ExitCode::SUCCESS)
}

async fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let cfg = config(&a.config)?;
    let mode: Mode = a.mode.into();
    let seed = a.seed.unwrap_or(cfg.distill.seed);
    let question = a.question_field.unwrap_or_else(|| cfg.distill.question_field.clone());
    let label = a
        .label_field
        .or_else(|| cfg.distill.label_field.clone())
        .unwrap_or_else(|| "answer".into());
    let items = eval::load_items(&a.dataset, &question, mode.needs_label().then_some(label.as_str()), mode, seed)?;
    let gw = Gateway::from_config(&cfg, Arc::new(SessionStore::in_memory()))?;
    let opts = ExperimentOptions {
        mode,
        task: a.task.into(),
        method: a.method,
        dataset: dataset_name(&a.dataset),
        seed,
        parallelism: cfg.distill.parallelism,
        failure_tolerance: cfg.distill.failure_tolerance,
        metric_parallelism: cfg.metrics.parallelism,
        meteor_budget: cfg.metrics.meteor_search_budget,
    };
    let report = eval::run_experiment(&gw, &items, &opts).await;
    let aborted = report.aborted;
    emit_report(&a.out, &AnyReport::Experiment(report))?;
    if aborted {
        eprintln!("run stopped early: failure ratio above tolerance");
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

async fn cmd_judge(a: JudgeArgs) -> Result<ExitCode> {
    let cfg = config(&a.config)?;
    let client = Arc::new(ModelClient::new(cfg.endpoints.judge()?.clone())?);
    let pairs = eval::load_judge_pairs(&a.pairs)?;
    let prompts: &PromptSet = &cfg.prompts;
    let report = eval::judge(&pairs, client, prompts, cfg.distill.parallelism, &a.method, &dataset_name(&a.pairs)).await;
    let aborted = report.aborted;
    emit_report(&a.out, &AnyReport::Judge(report))?;
    if aborted {
        eprintln!("judge stopped early: backend unavailable");
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_purge(a: PurgeArgs) -> Result<ExitCode> {
    let path = match (&a.store, &a.config) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => config(c)?.store_path,
        (None, None) => bail!("purge needs --store or --config"),
    };
    let filter = match (a.all, &a.older_than) {
        (true, _) => PurgeFilter::All,
        (false, Some(d)) => PurgeFilter::OlderThanMs(
            eval::parse_duration_ms(d).with_context(|| format!("bad duration `{d}` (try 30d, 12h, 15m, 45s)"))?,
        ),
        (false, None) => bail!("purge needs --all or --older-than"),
    };
    let store = SessionStore::open(&path).with_context(|| format!("opening store {}", path.display()))?;
    let removed = store.purge(filter)?;
    println!("{}", serde_json::json!({"removed": removed, "remaining": store.len()}));
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let reports = a
        .inputs
        .iter()
        .map(|p| AnyReport::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let table = eval::render_table(&reports);
    if let Some(out) = &a.out {
        write_or_print(Some(out), &table)?;
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_secrecy(a: SecrecyArgs) -> Result<ExitCode> {
    let sys = SecrecySystem::load(&a.system)?;
    let mut out = serde_json::Map::new();
    if a.exact || a.trials.is_none() {
        out.insert("exact".into(), serde_json::to_value(sys.analyze()?)?);
    }
    if let Some(t) = a.trials {
        out.insert(
            "empirical".into(),
            serde_json::to_value(sys.simulate_empirical(t, a.seed, a.include_payload)?)?,
        );
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

async fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Listgen(a) => cmd_listgen(a),
        Command::Corpus(a) => cmd_corpus(a),
        Command::Distill(a) => cmd_distill(a).await,
        Command::Serve(a) => cmd_serve(a).await,
        Command::Eval(a) => cmd_eval(a),
        Command::Run(a) => cmd_run(a).await,
        Command::Judge(a) => cmd_judge(a).await,
        Command::Purge(a) => cmd_purge(a),
        Command::Report(a) => cmd_report(a),
        Command::Secrecy(a) => cmd_secrecy(a),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log.as_deref());
    set_log_content(cli.log_content);
    match dispatch(cli.command).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
