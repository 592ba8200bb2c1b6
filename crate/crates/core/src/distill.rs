//! Offline distillation: build encoder pairs and decoder quadruples.
//!
//! For each source item:
//!
//! 1. **Context.** A dataset record's question is used verbatim. A
//!    synthetic item renders the `generate_context` prompt around a fresh
//!    random number list and asks the generation endpoint for a task text.
//! 2. **Transform.** The `transform` prompt rewrites `t_o` into `t_hat_o`.
//!    The rewrite must keep every numeral; it is retried up to the retry
//!    budget and the item is rejected when all attempts fail the check.
//! 3. **Respond.** `t_hat_o` alone is sent to the cloud endpoint, giving
//!    `t_hat_r`. The original text is never part of this request.
//! 4. **Restore.** With a label field the label becomes `t_r` verbatim;
//!    otherwise the `restore` prompt maps `t_hat_r` back using `t_o`.
//!
//! Outcomes are appended to `journal.jsonl` in completion order. A rerun
//! skips every id already journaled as done (failed items are retried), and
//! the output files are always rebuilt from the journal in source order, so
//! an interrupted and resumed job ends with the same files as one
//! uninterrupted run.
//!
//! Output directory layout: `encoder.jsonl`, `decoder.jsonl`,
//! `rejects.jsonl`, `progress.json`, `journal.jsonl`.

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    BackendError, ChatMessage, ChatRequest, ModelClient, TEMPERATURE_ANSWER, TEMPERATURE_GENERATE,
    TEMPERATURE_RESTORE, TEMPERATURE_TRANSFORM,
};
use crate::compose::compose_decoder_input;
use crate::config::{Config, DistillOptions};
use crate::guard::{check_numbers, GuardReport};
use crate::listgen::{ListGenConfig, ListGenError, ListGenerator, RandomList};
use crate::prompts::{PromptSet, PromptVars, TemplateKind};
use crate::session::{ContextPair, SessionQuadruple};

pub const ENCODER_FILE: &str = "encoder.jsonl";
pub const DECODER_FILE: &str = "decoder.jsonl";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const PROGRESS_FILE: &str = "progress.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";

/// Items that must complete before the failure ratio can abort a job.
pub const MIN_ABORT_SAMPLE: usize = 10;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error(transparent)]
    ListGen(#[from] ListGenError),
    #[error("backend setup: {0}")]
    Backend(#[from] BackendError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("aborted: {failed} of {processed} items failed (tolerance {tolerance})")]
    Aborted {
        failed: usize,
        processed: usize,
        tolerance: f64,
        summary: Box<DistillSummary>,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DistillError + '_ {
    move |source| DistillError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synthetic { listgen: ListGenConfig, count: usize },
    Dataset { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct DistillJob {
    pub source: Source,
    pub out_dir: PathBuf,
    pub options: DistillOptions,
    /// Stop after this many new items (the rest stay pending for a rerun).
    pub limit: Option<usize>,
}

/// One client per stage. Stages without their own endpoint share the
/// cloud client (and therefore its rate limit).
#[derive(Debug, Clone)]
pub struct DistillClients {
    pub generate: Arc<ModelClient>,
    pub transform: Arc<ModelClient>,
    pub respond: Arc<ModelClient>,
    pub restore: Arc<ModelClient>,
}

impl DistillClients {
    pub fn from_config(cfg: &Config) -> Result<Self, BackendError> {
        let cloud = Arc::new(ModelClient::new(cfg.endpoints.cloud.clone())?);
        let stage = |ep: &Option<crate::config::ModelEndpoint>| -> Result<Arc<ModelClient>, BackendError> {
            match ep {
                Some(ep) => Ok(Arc::new(ModelClient::new(ep.clone())?)),
                None => Ok(cloud.clone()),
            }
        };
        Ok(Self {
            generate: stage(&cfg.endpoints.generate)?,
            transform: stage(&cfg.endpoints.transform)?,
            restore: stage(&cfg.endpoints.restore)?,
            respond: cloud.clone(),
        })
    }
}

/// A unit of work before any model call.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceItem {
    pub id: String,
    /// Verbatim question for dataset items.
    pub t_o: Option<String>,
    /// Seed list for synthetic items.
    pub numbers: Option<RandomList>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Ok,
    Rejected,
    Failed,
}

/// Journal line: the outcome of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_o: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat_o: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat_r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default)]
    pub transform_attempts: u32,
}

impl ItemRecord {
    fn new(id: &str, status: ItemStatus) -> Self {
        Self {
            id: id.to_string(),
            status,
            t_o: None,
            t_hat_o: None,
            t_hat_r: None,
            t_r: None,
            reason: None,
            stage: None,
            detail: None,
            transform_attempts: 0,
        }
    }

    fn stop(mut self, status: ItemStatus, stage: &str, reason: &str, detail: String) -> Self {
        self.status = status;
        self.stage = Some(stage.into());
        self.reason = Some(reason.into());
        self.detail = Some(detail);
        self
    }
}

/// Reason codes in `rejects.jsonl`.
pub mod reason {
    pub const EMPTY_CONTEXT: &str = "empty_context";
    pub const NUMBER_MISMATCH: &str = "number_mismatch";
    pub const EMPTY_TRANSFORM: &str = "empty_transform";
    pub const MISSING_RESPONSE: &str = "missing_response";
    pub const EMPTY_RESTORATION: &str = "empty_restoration";
    pub const BACKEND_FAILURE: &str = "backend_failure";
    pub const INVALID_RECORD: &str = "invalid_record";
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillSummary {
    pub total: usize,
    pub ok: usize,
    pub rejected: usize,
    pub failed: usize,
    pub pending: usize,
    pub processed_this_run: usize,
    pub resumed_from_journal: usize,
    pub transform_retries: usize,
    pub encoder_lines: usize,
    pub decoder_lines: usize,
    pub reject_lines: usize,
    pub aborted: bool,
    pub finished: bool,
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Read a dataset JSONL file. Ids hash the raw record and the seed; exact
/// duplicate records collapse to one item.
pub fn load_dataset(
    path: &Path,
    question_field: &str,
    label_field: Option<&str>,
    seed: u64,
) -> Result<Vec<SourceItem>, DistillError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DistillError::Dataset { line: line_no, reason };
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let obj = v.as_object().ok_or_else(|| bad("record is not a JSON object".into()))?;
        let field_text = |name: &str| -> Result<String, DistillError> {
            match obj.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
                Some(_) => Err(bad(format!("field `{name}` is not text"))),
                None => Err(bad(format!("missing field `{name}`"))),
            }
        };
        let question = field_text(question_field)?;
        if question.trim().is_empty() {
            return Err(bad(format!("field `{question_field}` is empty")));
        }
        let label = label_field.map(field_text).transpose()?;
        let canonical = serde_json::to_string(&v).expect("value serializes");
        let id = short_hash(&[b"dataset", canonical.as_bytes(), &seed.to_le_bytes()]);
        if !seen.insert(id.clone()) {
            tracing::warn!(line = line_no, "duplicate dataset record skipped");
            continue;
        }
        items.push(SourceItem {
            id,
            t_o: Some(question),
            numbers: None,
            label,
        });
    }
    Ok(items)
}

/// Synthetic items: one random list each, ids from list, seed and index.
pub fn synthetic_items(listgen: &ListGenConfig, count: usize, seed: u64) -> Result<Vec<SourceItem>, DistillError> {
    let mut cfg = listgen.clone();
    let seed = cfg.seed.unwrap_or(seed);
    cfg.seed = Some(seed);
    let mut gen = ListGenerator::new(cfg)?;
    Ok((0..count)
        .map(|i| {
            let list = gen.next_list();
            let id = short_hash(&[
                b"synthetic",
                list.render().as_bytes(),
                &seed.to_le_bytes(),
                &(i as u64).to_le_bytes(),
            ]);
            SourceItem {
                id,
                t_o: None,
                numbers: Some(list),
                label: None,
            }
        })
        .collect())
}

fn stage_error(e: &BackendError) -> ItemStatus {
    match e {
        BackendError::InvalidRequest(_) => ItemStatus::Rejected,
        _ => ItemStatus::Failed,
    }
}

/// Produce `t_o` for an item (dataset pass-through or generation).
pub async fn gen_context(
    item: &SourceItem,
    client: &ModelClient,
    prompts: &PromptSet,
) -> Result<String, BackendError> {
    if let Some(t) = &item.t_o {
        return Ok(t.clone());
    }
    let numbers = item.numbers.as_ref().map(RandomList::render).unwrap_or_default();
    let prompt = prompts.render(
        TemplateKind::GenerateContext,
        &PromptVars {
            numbers: Some(&numbers),
            ..Default::default()
        },
    );
    Ok(client
        .complete_prompt(prompt, TEMPERATURE_GENERATE)
        .await?
        .content
        .trim()
        .to_string())
}

/// Outcome of the guarded transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub t_hat_o: String,
    pub attempts: u32,
    pub report: GuardReport,
}

/// Transform `t_o`, retrying up to `retries` extra times while the number
/// check fails. Returns the last attempt either way.
pub async fn transform_context(
    t_o: &str,
    client: &ModelClient,
    prompts: &PromptSet,
    retries: u32,
) -> Result<Transformed, BackendError> {
    let prompt = prompts.render(
        TemplateKind::Transform,
        &PromptVars {
            t_o: Some(t_o),
            ..Default::default()
        },
    );
    let mut last = None;
    for attempt in 1..=retries + 1 {
        let t_hat_o = client
            .complete_prompt(prompt.clone(), TEMPERATURE_TRANSFORM)
            .await?
            .content
            .trim()
            .to_string();
        let mut report = check_numbers(t_o, &t_hat_o);
        if t_hat_o.is_empty() {
            report.passed = false;
        }
        let passed = report.passed;
        last = Some(Transformed {
            t_hat_o,
            attempts: attempt,
            report,
        });
        if passed {
            break;
        }
    }
    Ok(last.expect("at least one attempt"))
}

/// Ask the cloud model about the transformed text only.
pub async fn collect_response(t_hat_o: &str, cloud: &ModelClient) -> Result<String, BackendError> {
    let req = ChatRequest::new(vec![ChatMessage::user(t_hat_o)]).with_temperature(TEMPERATURE_ANSWER);
    Ok(cloud.complete(&req).await?.content.trim().to_string())
}

/// The label verbatim when there is one, else a model restoration.
pub async fn restore_or_label(
    t_o: &str,
    t_hat_r: &str,
    label: Option<&str>,
    client: &ModelClient,
    prompts: &PromptSet,
) -> Result<String, BackendError> {
    if let Some(label) = label {
        return Ok(label.to_string());
    }
    let prompt = prompts.render(
        TemplateKind::Restore,
        &PromptVars {
            t_o: Some(t_o),
            t_hat_r: Some(t_hat_r),
            ..Default::default()
        },
    );
    Ok(client
        .complete_prompt(prompt, TEMPERATURE_RESTORE)
        .await?
        .content
        .trim()
        .to_string())
}

async fn process_item(
    item: SourceItem,
    clients: &DistillClients,
    prompts: &PromptSet,
    retries: u32,
) -> ItemRecord {
    let mut rec = ItemRecord::new(&item.id, ItemStatus::Ok);
    let t_o = match gen_context(&item, &clients.generate, prompts).await {
        Ok(t) if t.is_empty() => {
            return rec.stop(ItemStatus::Rejected, "context", reason::EMPTY_CONTEXT, "empty text".into())
        }
        Ok(t) => t,
        Err(e) => return rec.stop(stage_error(&e), "context", reason::BACKEND_FAILURE, e.to_string()),
    };
    rec.t_o = Some(t_o.clone());

    let tr = match transform_context(&t_o, &clients.transform, prompts, retries).await {
        Ok(tr) => tr,
        Err(e) => return rec.stop(stage_error(&e), "transform", reason::BACKEND_FAILURE, e.to_string()),
    };
    rec.transform_attempts = tr.attempts;
    rec.t_hat_o = Some(tr.t_hat_o.clone());
    if tr.t_hat_o.is_empty() {
        return rec.stop(ItemStatus::Rejected, "transform", reason::EMPTY_TRANSFORM, "empty rewrite".into());
    }
    if !tr.report.passed {
        let detail = format!("after {} attempt(s): {}", tr.attempts, tr.report.explain());
        return rec.stop(ItemStatus::Rejected, "transform", reason::NUMBER_MISMATCH, detail);
    }

    let t_hat_r = match collect_response(&tr.t_hat_o, &clients.respond).await {
        Ok(r) => r,
        Err(e) => return rec.stop(stage_error(&e), "respond", reason::BACKEND_FAILURE, e.to_string()),
    };
    if t_hat_r.is_empty() {
        return rec.stop(ItemStatus::Rejected, "respond", reason::MISSING_RESPONSE, "empty response".into());
    }
    rec.t_hat_r = Some(t_hat_r.clone());

    match restore_or_label(&t_o, &t_hat_r, item.label.as_deref(), &clients.restore, prompts).await {
        Ok(t_r) if t_r.is_empty() => {
            rec.stop(ItemStatus::Rejected, "restore", reason::EMPTY_RESTORATION, "empty restoration".into())
        }
        Ok(t_r) => {
            rec.t_r = Some(t_r);
            rec
        }
        Err(e) => rec.stop(stage_error(&e), "restore", reason::BACKEND_FAILURE, e.to_string()),
    }
}

#[derive(Serialize)]
struct EncoderLine<'a> {
    id: &'a str,
    input: &'a str,
    target: &'a str,
}

#[derive(Serialize)]
struct DecoderLine<'a> {
    id: &'a str,
    input: String,
    target: &'a str,
}

#[derive(Serialize)]
struct RejectLine<'a> {
    id: &'a str,
    reason: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a str>,
    retryable: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitCounts {
    pub encoder: usize,
    pub decoder: usize,
    pub rejects: usize,
}

/// Check a successful record against the pair and quadruple invariants.
fn complete_quadruple(r: &ItemRecord) -> Result<(ContextPair, SessionQuadruple), &'static str> {
    let (Some(t_o), Some(t_hat_o)) = (&r.t_o, &r.t_hat_o) else {
        return Err(reason::INVALID_RECORD);
    };
    let pair = ContextPair {
        id: r.id.clone(),
        t_o: t_o.clone(),
        t_hat_o: t_hat_o.clone(),
    };
    if !pair.is_valid() {
        return Err(reason::INVALID_RECORD);
    }
    let Some(t_hat_r) = r.t_hat_r.as_ref().filter(|s| !s.is_empty()) else {
        return Err(reason::MISSING_RESPONSE);
    };
    let Some(t_r) = r.t_r.as_ref().filter(|s| !s.is_empty()) else {
        return Err(reason::EMPTY_RESTORATION);
    };
    let mut q = SessionQuadruple::new(r.id.clone(), t_o.clone());
    q.t_hat_o = Some(t_hat_o.clone());
    q.t_hat_r = Some(t_hat_r.clone());
    q.t_r = Some(t_r.clone());
    q.validate().map_err(|_| reason::INVALID_RECORD)?;
    Ok((pair, q))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), DistillError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Write encoder, decoder and rejects files from records in output order.
/// Successful records with a missing field go to the rejects file.
pub fn emit_training_files(records: &[ItemRecord], out_dir: &Path) -> Result<EmitCounts, DistillError> {
    let mut enc = String::new();
    let mut dec = String::new();
    let mut rej = String::new();
    let mut counts = EmitCounts::default();
    let push = |buf: &mut String, v: &dyn erased::Line| {
        buf.push_str(&v.json());
        buf.push('\n');
    };
    for r in records {
        match r.status {
            ItemStatus::Ok => match complete_quadruple(r) {
                Ok((pair, q)) => {
                    push(
                        &mut enc,
                        &EncoderLine {
                            id: &pair.id,
                            input: &pair.t_o,
                            target: &pair.t_hat_o,
                        },
                    );
                    let t_hat_r = q.t_hat_r.as_deref().unwrap_or_default();
                    push(
                        &mut dec,
                        &DecoderLine {
                            id: &q.session_id,
                            input: compose_decoder_input(&q.t_o, &pair.t_hat_o, t_hat_r),
                            target: q.t_r.as_deref().unwrap_or_default(),
                        },
                    );
                    counts.encoder += 1;
                    counts.decoder += 1;
                }
                Err(why) => {
                    push(
                        &mut rej,
                        &RejectLine {
                            id: &r.id,
                            reason: why,
                            stage: Some("emit"),
                            detail: None,
                            retryable: false,
                        },
                    );
                    counts.rejects += 1;
                }
            },
            ItemStatus::Rejected | ItemStatus::Failed => {
                push(
                    &mut rej,
                    &RejectLine {
                        id: &r.id,
                        reason: r.reason.as_deref().unwrap_or(reason::INVALID_RECORD),
                        stage: r.stage.as_deref(),
                        detail: r.detail.as_deref(),
                        retryable: r.status == ItemStatus::Failed,
                    },
                );
                counts.rejects += 1;
            }
        }
    }
    write_atomic(&out_dir.join(ENCODER_FILE), &enc)?;
    write_atomic(&out_dir.join(DECODER_FILE), &dec)?;
    write_atomic(&out_dir.join(REJECTS_FILE), &rej)?;
    Ok(counts)
}

mod erased {
    use serde::Serialize;

    pub trait Line {
        fn json(&self) -> String;
    }

    impl<T: Serialize> Line for T {
        fn json(&self) -> String {
            serde_json::to_string(self).expect("plain records serialize")
        }
    }
}

/// Latest journal record per id. A torn final line is ignored.
pub fn read_journal(path: &Path) -> Result<HashMap<String, ItemRecord>, DistillError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = HashMap::new();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<ItemRecord>(line) {
            Ok(r) => {
                out.insert(r.id.clone(), r);
            }
            Err(_) if i + 1 == lines.len() => {
                tracing::warn!(path = %path.display(), "ignoring torn final journal line");
            }
            Err(e) => {
                return Err(DistillError::Dataset {
                    line: i + 1,
                    reason: format!("journal {}: {e}", path.display()),
                })
            }
        }
    }
    Ok(out)
}

fn probe_writable(dir: &Path) -> Result<(), DistillError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"ok").map_err(io_err(dir))?;
    fs::remove_file(&probe).map_err(io_err(dir))
}

fn summarize(items: &[SourceItem], done: &HashMap<String, ItemRecord>, summary: &mut DistillSummary) {
    summary.total = items.len();
    summary.ok = 0;
    summary.rejected = 0;
    summary.failed = 0;
    summary.pending = 0;
    for it in items {
        match done.get(&it.id).map(|r| r.status) {
            Some(ItemStatus::Ok) => summary.ok += 1,
            Some(ItemStatus::Rejected) => summary.rejected += 1,
            Some(ItemStatus::Failed) => summary.failed += 1,
            None => summary.pending += 1,
        }
    }
}

fn write_progress(out_dir: &Path, summary: &DistillSummary) -> Result<(), DistillError> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_atomic(&out_dir.join(PROGRESS_FILE), &(text + "\n"))
}

/// Source items for a job.
pub fn job_items(job: &DistillJob) -> Result<Vec<SourceItem>, DistillError> {
    match &job.source {
        Source::Synthetic { listgen, count } => {
            if *count == 0 {
                return Err(DistillError::Config("synthetic count must be at least 1".into()));
            }
            synthetic_items(listgen, *count, job.options.seed)
        }
        Source::Dataset { path } => load_dataset(
            path,
            &job.options.question_field,
            job.options.label_field.as_deref(),
            job.options.seed,
        ),
    }
}

/// Run (or resume) a job and write the output files.
pub async fn run_distill(
    job: &DistillJob,
    clients: &DistillClients,
    prompts: &PromptSet,
) -> Result<DistillSummary, DistillError> {
    probe_writable(&job.out_dir)?;
    let items = job_items(job)?;
    let journal_path = job.out_dir.join(JOURNAL_FILE);
    let mut done = read_journal(&journal_path)?;
    let item_ids: HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
    done.retain(|id, _| item_ids.contains(id.as_str()));

    let mut summary = DistillSummary {
        resumed_from_journal: done.values().filter(|r| r.status != ItemStatus::Failed).count(),
        ..Default::default()
    };
    let pending: Vec<SourceItem> = items
        .iter()
        .filter(|it| done.get(&it.id).is_none_or(|r| r.status == ItemStatus::Failed))
        .take(job.limit.unwrap_or(usize::MAX))
        .cloned()
        .collect();

    // Drop a torn tail so appends start on a fresh line.
    if let Ok(text) = fs::read_to_string(&journal_path) {
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |p| p + 1);
            write_atomic(&journal_path, &text[..keep])?;
        }
    }
    let mut journal = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&journal_path)
        .map_err(io_err(&journal_path))?;

    let retries = job.options.retry_budget;
    let mut stream = futures::stream::iter(pending)
        .map(|item| process_item(item, clients, prompts, retries))
        .buffer_unordered(job.options.parallelism.max(1));

    let mut processed = 0usize;
    let mut failed_now = 0usize;
    let mut aborted = false;
    while let Some(rec) = stream.next().await {
        processed += 1;
        summary.transform_retries += rec.transform_attempts.saturating_sub(1) as usize;
        if rec.status == ItemStatus::Failed {
            failed_now += 1;
        }
        let mut line = serde_json::to_string(&rec).expect("record serializes");
        line.push('\n');
        journal
            .write_all(line.as_bytes())
            .and_then(|_| journal.flush())
            .map_err(io_err(&journal_path))?;
        done.insert(rec.id.clone(), rec);
        summary.processed_this_run = processed;
        summarize(&items, &done, &mut summary);
        write_progress(&job.out_dir, &summary)?;
        if processed >= MIN_ABORT_SAMPLE
            && failed_now as f64 > job.options.failure_tolerance * processed as f64
        {
            aborted = true;
            break;
        }
    }
    drop(stream);
    if !aborted && processed > 0 && failed_now as f64 > job.options.failure_tolerance * processed as f64 {
        aborted = true;
    }

    summarize(&items, &done, &mut summary);
    let ordered: Vec<ItemRecord> = items.iter().filter_map(|it| done.get(&it.id).cloned()).collect();
    let counts = emit_training_files(&ordered, &job.out_dir)?;
    summary.encoder_lines = counts.encoder;
    summary.decoder_lines = counts.decoder;
    summary.reject_lines = counts.rejects;
    summary.aborted = aborted;
    summary.finished = !aborted && summary.pending == 0 && summary.failed == 0;
    write_progress(&job.out_dir, &summary)?;
    if aborted {
        return Err(DistillError::Aborted {
            failed: failed_now,
            processed,
            tolerance: job.options.failure_tolerance,
            summary: Box::new(summary),
        });
    }
    Ok(summary)
}
