//! Experiments, LLM-judge scoring and report tabulation.
//!
//! Every report is a JSON object with `"schema": "semgate.report/v1"` and
//! a `kind` of `experiment`, `similarity` or `judge` (field reference in
//! `docs/report-schema.md`). Reports hold no timestamps or random ids, so
//! the same inputs, seed and mock backends give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use futures::StreamExt;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ModelClient, TEMPERATURE_JUDGE};
use crate::distill::{load_dataset, DistillError, SourceItem, MIN_ABORT_SAMPLE};
use crate::gateway::{Gateway, GatewayError, GatewayRequest};
use crate::guard::check_numbers;
use crate::metrics::{accuracy, similarity_report, AccuracyReport, MetricContext, MetricReport, Task, TextPair};
use crate::prompts::{PromptSet, PromptVars, TemplateKind};

pub const REPORT_SCHEMA: &str = "semgate.report/v1";
pub const KIND_EXPERIMENT: &str = "experiment";
pub const KIND_SIMILARITY: &str = "similarity";
pub const KIND_JUDGE: &str = "judge";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DistillError),
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("report {path}: {reason}")]
    Report { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Task accuracy of the cloud answers to transformed questions.
    Utility,
    /// Similarity of restored answers to the labels.
    Experience,
    /// Similarity of transformed questions to the originals (lower is better).
    Privacy,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "utility" => Some(Mode::Utility),
            "experience" => Some(Mode::Experience),
            "privacy" => Some(Mode::Privacy),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Utility => "utility",
            Mode::Experience => "experience",
            Mode::Privacy => "privacy",
        }
    }

    pub fn needs_label(self) -> bool {
        !matches!(self, Mode::Privacy)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub mode: Mode,
    pub task: Task,
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub parallelism: usize,
    pub failure_tolerance: f64,
    pub metric_parallelism: usize,
    pub meteor_budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Ok,
    Rejected,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLine {
    pub id: String,
    pub status: ItemState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumeralSummary {
    /// Items whose transformed text keeps the numeral multiset.
    pub matched: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub kind: String,
    pub method: String,
    pub mode: Mode,
    pub dataset: String,
    pub seed: u64,
    pub total: usize,
    pub completed: usize,
    pub rejected: usize,
    pub failed: usize,
    pub completion_ratio: f64,
    pub aborted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restored_accuracy: Option<AccuracyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerals: Option<NumeralSummary>,
    pub items: Vec<ItemLine>,
}

/// Per-item texts gathered while running an experiment.
#[derive(Debug, Clone, Default)]
struct Outcome {
    state: Option<ItemState>,
    error: Option<String>,
    t_hat_o: Option<String>,
    t_hat_r: Option<String>,
    t_r: Option<String>,
}

fn gateway_state(e: &GatewayError) -> ItemState {
    match e {
        GatewayError::GuardRejected { .. } | GatewayError::InvalidRequest(_) => ItemState::Rejected,
        _ => ItemState::Failed,
    }
}

async fn run_item(gw: &Gateway, item: &SourceItem, mode: Mode) -> Outcome {
    let t_o = item.t_o.clone().unwrap_or_default();
    let mut out = Outcome::default();
    if mode == Mode::Privacy {
        match gw.encode_only(&t_o).await {
            Ok((t_hat_o, report, _)) => {
                out.t_hat_o = Some(t_hat_o);
                if report.passed {
                    out.state = Some(ItemState::Ok);
                } else {
                    out.state = Some(ItemState::Rejected);
                    out.error = Some(report.explain());
                }
            }
            Err(e) => {
                out.state = Some(ItemState::Failed);
                out.error = Some(e.to_string());
            }
        }
        return out;
    }
    let result = gw.handle_query(GatewayRequest::new(t_o).with_session(&item.id)).await;
    if let Some(q) = gw.store().get(&item.id) {
        out.t_hat_o = q.t_hat_o;
        out.t_hat_r = q.t_hat_r;
        out.t_r = q.t_r;
    }
    match result {
        Ok(_) => out.state = Some(ItemState::Ok),
        Err(e) => {
            out.state = Some(gateway_state(&e));
            out.error = Some(e.to_string());
        }
    }
    out
}

/// Run the dataset through the gateway (or its encoder alone in privacy
/// mode). The gateway should use a fresh store: item ids become session ids.
/// A backend failure ratio above the tolerance stops the run and the
/// report covers what finished.
pub async fn run_experiment(gw: &Gateway, items: &[SourceItem], opts: &ExperimentOptions) -> ExperimentReport {
    let mut outcomes: Vec<Outcome> = vec![Outcome::default(); items.len()];
    let mut stream = futures::stream::iter(items.iter().enumerate())
        .map(|(i, item)| async move { (i, run_item(gw, item, opts.mode).await) })
        .buffer_unordered(opts.parallelism.max(1));
    let mut processed = 0usize;
    let mut failed = 0usize;
    let mut aborted = false;
    while let Some((i, o)) = stream.next().await {
        processed += 1;
        if o.state == Some(ItemState::Failed) {
            failed += 1;
        }
        outcomes[i] = o;
        if processed >= MIN_ABORT_SAMPLE.min(items.len()) && failed as f64 > opts.failure_tolerance * processed as f64 {
            aborted = true;
            tracing::error!(failed, processed, "failure ratio above tolerance, stopping experiment");
            break;
        }
    }
    drop(stream);
    build_report(items, &outcomes, opts, aborted)
}

fn build_report(items: &[SourceItem], outcomes: &[Outcome], opts: &ExperimentOptions, aborted: bool) -> ExperimentReport {
    let count = |s: ItemState| outcomes.iter().filter(|o| o.state == Some(s)).count();
    let completed = count(ItemState::Ok);
    let rejected = count(ItemState::Rejected);
    let failed = count(ItemState::Failed);
    let processed = completed + rejected + failed;
    let run: Vec<(&SourceItem, &Outcome)> = items.iter().zip(outcomes).filter(|(_, o)| o.state.is_some()).collect();
    let label = |it: &SourceItem| it.label.clone().unwrap_or_default();

    let mut report = ExperimentReport {
        schema: REPORT_SCHEMA.into(),
        kind: KIND_EXPERIMENT.into(),
        method: opts.method.clone(),
        mode: opts.mode,
        dataset: opts.dataset.clone(),
        seed: opts.seed,
        total: items.len(),
        completed,
        rejected,
        failed,
        completion_ratio: if items.is_empty() { 1.0 } else { processed as f64 / items.len() as f64 },
        aborted,
        accuracy: None,
        restored_accuracy: None,
        similarity: None,
        numerals: None,
        items: items
            .iter()
            .zip(outcomes)
            .map(|(it, o)| ItemLine {
                id: it.id.clone(),
                status: o.state.unwrap_or(ItemState::NotRun),
                error: o.error.clone(),
            })
            .collect(),
    };

    let pairs_of = |cand: &dyn Fn(&Outcome) -> Option<String>, reference: &dyn Fn(&SourceItem) -> String| -> Vec<TextPair> {
        run.iter()
            .map(|(it, o)| TextPair {
                id: it.id.clone(),
                candidate: cand(o).unwrap_or_default(),
                reference: reference(it),
            })
            .collect()
    };
    let similarity = |ctx: MetricContext, pairs: &[TextPair]| {
        similarity_report(ctx, pairs, opts.metric_parallelism, opts.meteor_budget)
    };

    match opts.mode {
        Mode::Utility => {
            let refs: Vec<String> = run.iter().map(|(it, _)| label(it)).collect();
            let cloud: Vec<String> = run.iter().map(|(_, o)| o.t_hat_r.clone().unwrap_or_default()).collect();
            let restored: Vec<String> = run.iter().map(|(_, o)| o.t_r.clone().unwrap_or_default()).collect();
            report.accuracy = Some(accuracy(&cloud, &refs, opts.task));
            report.restored_accuracy = Some(accuracy(&restored, &refs, opts.task));
            report.similarity = Some(similarity(MetricContext::Utility, &pairs_of(&|o| o.t_hat_r.clone(), &label)));
        }
        Mode::Experience => {
            report.similarity = Some(similarity(MetricContext::Experience, &pairs_of(&|o| o.t_r.clone(), &label)));
        }
        Mode::Privacy => {
            let scored: Vec<(&SourceItem, &Outcome)> = run.iter().copied().filter(|(_, o)| o.state == Some(ItemState::Ok)).collect();
            let pairs: Vec<TextPair> = scored
                .iter()
                .map(|(it, o)| TextPair {
                    id: it.id.clone(),
                    candidate: o.t_hat_o.clone().unwrap_or_default(),
                    reference: it.t_o.clone().unwrap_or_default(),
                })
                .collect();
            report.numerals = Some(NumeralSummary {
                matched: pairs.iter().filter(|p| check_numbers(&p.reference, &p.candidate).passed).count(),
                total: pairs.len(),
            });
            report.similarity = Some(similarity(MetricContext::Privacy, &pairs));
        }
    }
    report
}

/// Load experiment items, requiring a label where the mode needs one.
pub fn load_items(
    path: &Path,
    question_field: &str,
    label_field: Option<&str>,
    mode: Mode,
    seed: u64,
) -> Result<Vec<SourceItem>, EvalError> {
    if mode.needs_label() && label_field.is_none() {
        return Err(EvalError::Input {
            path: path.to_path_buf(),
            reason: format!("{} mode needs a label field", mode.as_str()),
        });
    }
    Ok(load_dataset(path, question_field, label_field, seed)?)
}

/// Scores for an externally produced pair file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub schema: String,
    pub kind: String,
    pub method: String,
    pub mode: Mode,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerals: Option<NumeralSummary>,
    pub similarity: MetricReport,
}

const CANDIDATE_KEYS: [&str; 4] = ["candidate", "t_hat_o", "encrypted", "response"];
const REFERENCE_KEYS: [&str; 3] = ["reference", "t_o", "label"];

/// Read a pair file. Each line is an object with a candidate text
/// (`candidate`, `t_hat_o`, `encrypted` or `response`) and a reference
/// (`reference`, `t_o` or `label`); `id` defaults to the line number.
pub fn load_text_pairs(path: &Path) -> Result<Vec<TextPair>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, reason: String| EvalError::Input {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
        let pick = |keys: &[&str]| keys.iter().find_map(|k| v.get(*k).and_then(|x| x.as_str()).map(str::to_string));
        let candidate = pick(&CANDIDATE_KEYS).ok_or_else(|| bad(i + 1, format!("no candidate field ({})", CANDIDATE_KEYS.join(", "))))?;
        let reference = pick(&REFERENCE_KEYS).ok_or_else(|| bad(i + 1, format!("no reference field ({})", REFERENCE_KEYS.join(", "))))?;
        let id = match v.get("id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => format!("line-{}", i + 1),
        };
        out.push(TextPair { id, candidate, reference });
    }
    Ok(out)
}

impl Mode {
    pub fn context(self) -> MetricContext {
        match self {
            Mode::Utility => MetricContext::Utility,
            Mode::Experience => MetricContext::Experience,
            Mode::Privacy => MetricContext::Privacy,
        }
    }
}

/// Score a pair file. Utility mode adds task accuracy of candidates
/// against references; privacy mode adds the numeral match count.
pub fn pair_similarity(
    pairs: &[TextPair],
    mode: Mode,
    task: Task,
    method: &str,
    dataset: &str,
    parallelism: usize,
    meteor_budget: u64,
) -> SimilarityReport {
    let candidates: Vec<&str> = pairs.iter().map(|p| p.candidate.as_str()).collect();
    let references: Vec<&str> = pairs.iter().map(|p| p.reference.as_str()).collect();
    SimilarityReport {
        schema: REPORT_SCHEMA.into(),
        kind: KIND_SIMILARITY.into(),
        method: method.into(),
        mode,
        dataset: dataset.into(),
        accuracy: (mode == Mode::Utility).then(|| accuracy(&candidates, &references, task)),
        numerals: (mode == Mode::Privacy).then(|| NumeralSummary {
            matched: pairs.iter().filter(|p| check_numbers(&p.reference, &p.candidate).passed).count(),
            total: pairs.len(),
        }),
        similarity: similarity_report(mode.context(), pairs, parallelism, meteor_budget),
    }
}

/// One text triple to be judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgePair {
    pub id: String,
    pub t_o: String,
    pub t_hat_o: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_r: Option<String>,
}

/// Read judge input: `t_o`/`t_hat_o`/`t_r` objects, or encoder-file lines
/// (`input`, `target`). `id` defaults to the line number.
pub fn load_judge_pairs(path: &Path) -> Result<Vec<JudgePair>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EvalError::Input {
            path: path.to_path_buf(),
            reason: format!("line {}: {reason}", i + 1),
        };
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let s = |k: &str| v.get(k).and_then(|x| x.as_str()).map(str::to_string);
        let t_o = s("t_o").or_else(|| s("input")).ok_or_else(|| bad("missing t_o".into()))?;
        let t_hat_o = s("t_hat_o").or_else(|| s("target")).ok_or_else(|| bad("missing t_hat_o".into()))?;
        out.push(JudgePair {
            id: s("id").unwrap_or_else(|| format!("line-{}", i + 1)),
            t_o,
            t_hat_o,
            t_r: s("t_r"),
        });
    }
    Ok(out)
}

fn score_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?i:SCORES:)?\s*([1-5](?:\s*/\s*[1-5])*)$").expect("valid regex"))
}

/// Scores from the last non-empty line of a judge reply, when it is a
/// well-formed score line with exactly `dims` entries.
pub fn parse_score_line(reply: &str, dims: usize) -> Option<Vec<u8>> {
    let last = reply.lines().map(str::trim).rev().find(|l| !l.is_empty())?;
    let last = last.trim_matches(|c: char| c == '*' || c == '`').trim();
    let caps = score_line_re().captures(last)?;
    let scores: Vec<u8> = caps[1].split('/').map(|s| s.trim().parse().expect("digit 1-5")).collect();
    (scores.len() == dims).then_some(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeState {
    Scored,
    Unscored,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRow {
    pub id: String,
    pub status: JudgeState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<u8>>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionMean {
    pub dimension: String,
    /// `None` when no pair was scored.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub schema: String,
    pub kind: String,
    pub method: String,
    pub dataset: String,
    pub dimensions: Vec<String>,
    pub n_pairs: usize,
    pub scored: usize,
    pub unscored: usize,
    pub completion_ratio: f64,
    pub aborted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub means: Vec<DimensionMean>,
    pub rows: Vec<JudgeRow>,
}

async fn judge_one(pair: &JudgePair, client: &ModelClient, prompts: &PromptSet, dims: usize) -> Result<JudgeRow, BackendError> {
    let prompt = prompts.render(
        TemplateKind::JudgeRubric,
        &PromptVars {
            t_o: Some(&pair.t_o),
            t_hat_o: Some(&pair.t_hat_o),
            t_r: pair.t_r.as_deref(),
            ..Default::default()
        },
    );
    for attempt in 1..=2 {
        let reply = client.complete_prompt(prompt.clone(), TEMPERATURE_JUDGE).await?;
        if let Some(scores) = parse_score_line(&reply.content, dims) {
            return Ok(JudgeRow {
                id: pair.id.clone(),
                status: JudgeState::Scored,
                scores: Some(scores),
                attempts: attempt,
            });
        }
        tracing::warn!(pair = %pair.id, attempt, "judge reply has no valid score line");
    }
    Ok(JudgeRow {
        id: pair.id.clone(),
        status: JudgeState::Unscored,
        scores: None,
        attempts: 2,
    })
}

/// Score every pair on the rubric's dimensions. A malformed reply is
/// retried once, then the pair is unscored. A backend failure stops the
/// run; the report then covers the pairs judged so far.
pub async fn judge(
    pairs: &[JudgePair],
    client: Arc<ModelClient>,
    prompts: &PromptSet,
    parallelism: usize,
    method: &str,
    dataset: &str,
) -> JudgeReport {
    let dims = prompts.judge_dimensions().to_vec();
    let mut rows: Vec<Option<JudgeRow>> = vec![None; pairs.len()];
    let mut error = None;
    let n_dims = dims.len();
    {
        let client = &client;
        let mut stream = futures::stream::iter(pairs.iter().enumerate())
            .map(|(i, p)| async move { (i, judge_one(p, client, prompts, n_dims).await) })
            .buffer_unordered(parallelism.max(1));
        while let Some((i, r)) = stream.next().await {
            match r {
                Ok(row) => rows[i] = Some(row),
                Err(e) => {
                    tracing::error!(error = %e, "judge backend failed, stopping");
                    error = Some(e.to_string());
                    break;
                }
            }
        }
    }
    let rows: Vec<JudgeRow> = rows
        .into_iter()
        .zip(pairs)
        .map(|(r, p)| {
            r.unwrap_or(JudgeRow {
                id: p.id.clone(),
                status: JudgeState::NotRun,
                scores: None,
                attempts: 0,
            })
        })
        .collect();
    let scored: Vec<&Vec<u8>> = rows.iter().filter_map(|r| r.scores.as_ref()).collect();
    let means = dims
        .iter()
        .enumerate()
        .map(|(d, name)| DimensionMean {
            dimension: name.clone(),
            mean: (!scored.is_empty())
                .then(|| scored.iter().map(|s| s[d] as f64).sum::<f64>() / scored.len() as f64),
        })
        .collect();
    let run = rows.iter().filter(|r| r.status != JudgeState::NotRun).count();
    JudgeReport {
        schema: REPORT_SCHEMA.into(),
        kind: KIND_JUDGE.into(),
        method: method.into(),
        dataset: dataset.into(),
        dimensions: dims.clone(),
        n_pairs: pairs.len(),
        scored: scored.len(),
        unscored: rows.iter().filter(|r| r.status == JudgeState::Unscored).count(),
        completion_ratio: if pairs.is_empty() { 1.0 } else { run as f64 / pairs.len() as f64 },
        aborted: error.is_some(),
        error,
        means,
        rows,
    }
}

/// Any report file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyReport {
    Experiment(ExperimentReport),
    Similarity(SimilarityReport),
    Judge(JudgeReport),
}

impl AnyReport {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if v.get("schema").and_then(|s| s.as_str()) != Some(REPORT_SCHEMA) {
            return Err(format!("not a {REPORT_SCHEMA} report"));
        }
        let kind = v.get("kind").and_then(|s| s.as_str()).unwrap_or_default().to_string();
        let r = match kind.as_str() {
            KIND_EXPERIMENT => serde_json::from_value(v).map(AnyReport::Experiment),
            KIND_SIMILARITY => serde_json::from_value(v).map(AnyReport::Similarity),
            KIND_JUDGE => serde_json::from_value(v).map(AnyReport::Judge),
            other => return Err(format!("unknown report kind `{other}`")),
        };
        r.map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|reason| EvalError::Report {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn to_json(&self) -> String {
        let s = match self {
            AnyReport::Experiment(r) => serde_json::to_string_pretty(r),
            AnyReport::Similarity(r) => serde_json::to_string_pretty(r),
            AnyReport::Judge(r) => serde_json::to_string_pretty(r),
        };
        s.expect("reports serialize") + "\n"
    }
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

const TABLE_METRICS: [&str; 9] = [
    "bleu_avg", "bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor", "rouge_1", "rouge_2", "rouge_l",
];

/// Plain-text tables: one for similarity and accuracy reports, one for
/// judge reports. Rows follow input order.
pub fn render_table(reports: &[AnyReport]) -> String {
    let mut sim: Vec<Vec<String>> = vec![{
        let mut h: Vec<String> = ["method", "mode", "dir", "n", "accuracy"].iter().map(|s| s.to_string()).collect();
        h.extend(TABLE_METRICS.iter().map(|s| s.to_string()));
        h.push("bertscore".into());
        h
    }];
    let mut judges: Vec<Vec<String>> = Vec::new();
    let sim_row = |method: &str, mode: &str, n: usize, acc: Option<f64>, m: Option<&MetricReport>| {
        let dir = match m.map(|m| m.context.direction()) {
            Some(crate::metrics::Direction::LowerBetter) => "lower",
            Some(crate::metrics::Direction::HigherBetter) => "higher",
            None => "higher",
        };
        let mut row = vec![method.to_string(), mode.to_string(), dir.to_string(), n.to_string(), fmt_score(acc)];
        row.extend(TABLE_METRICS.iter().map(|k| fmt_score(m.and_then(|m| m.aggregate.get(k)))));
        row.push(match m.map(|m| m.aggregate.bertscore) {
            Some(crate::metrics::OptionalScore::Value(v)) => format!("{v:.4}"),
            Some(crate::metrics::OptionalScore::Absent) => "absent".into(),
            None => "-".into(),
        });
        row
    };
    for r in reports {
        match r {
            AnyReport::Experiment(e) => sim.push(sim_row(
                &e.method,
                e.mode.as_str(),
                e.total,
                e.accuracy.as_ref().map(|a| a.accuracy),
                e.similarity.as_ref(),
            )),
            AnyReport::Similarity(s) => sim.push(sim_row(
                &s.method,
                s.mode.as_str(),
                s.similarity.n_pairs,
                s.accuracy.as_ref().map(|a| a.accuracy),
                Some(&s.similarity),
            )),
            AnyReport::Judge(j) => {
                if judges.is_empty() {
                    let mut h = vec!["method".to_string(), "n".into(), "scored".into(), "unscored".into()];
                    h.extend(j.dimensions.iter().cloned());
                    judges.push(h);
                }
                let mut row = vec![j.method.clone(), j.n_pairs.to_string(), j.scored.to_string(), j.unscored.to_string()];
                row.extend(j.means.iter().map(|m| fmt_score(m.mean)));
                judges.push(row);
            }
        }
    }
    let mut out = String::new();
    if sim.len() > 1 {
        out.push_str(&align(&sim));
    }
    if !judges.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&align(&judges));
    }
    out
}

/// Parse `30d`, `12h`, `15m`, `45s`, `250ms` or a bare number of seconds.
pub fn parse_duration_ms(s: &str) -> Option<u64> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: u64 = num.parse().ok()?;
    let factor = match unit {
        "ms" => 1,
        "" | "s" => 1_000,
        "m" => 60_000,
        "h" => 3_600_000,
        "d" => 86_400_000,
        _ => return None,
    };
    n.checked_mul(factor)
}

/// Summary counts for a report, keyed by name, for quick CLI output.
pub fn headline(r: &AnyReport) -> BTreeMap<&'static str, String> {
    let mut m = BTreeMap::new();
    match r {
        AnyReport::Experiment(e) => {
            m.insert("mode", e.mode.as_str().to_string());
            m.insert("completed", format!("{}/{}", e.completed, e.total));
            if let Some(a) = &e.accuracy {
                m.insert("accuracy", format!("{:.4}", a.accuracy));
            }
            if let Some(s) = &e.similarity {
                m.insert("rouge_1", format!("{:.4}", s.aggregate.rouge_1));
            }
            if let Some(n) = &e.numerals {
                m.insert("numerals", format!("{}/{}", n.matched, n.total));
            }
        }
        AnyReport::Similarity(s) => {
            m.insert("pairs", s.similarity.n_pairs.to_string());
            if let Some(a) = &s.accuracy {
                m.insert("accuracy", format!("{:.4}", a.accuracy));
            }
            m.insert("rouge_1", format!("{:.4}", s.similarity.aggregate.rouge_1));
        }
        AnyReport::Judge(j) => {
            m.insert("scored", format!("{}/{}", j.scored, j.n_pairs));
            m.insert("unscored", j.unscored.to_string());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_line_parsing() {
        assert_eq!(parse_score_line("fine.\nSCORES: 5/4/3", 3), Some(vec![5, 4, 3]));
        assert_eq!(parse_score_line("5/5/5\n", 3), Some(vec![5, 5, 5]));
        assert_eq!(parse_score_line("scores: 1 / 2 / 3", 3), Some(vec![1, 2, 3]));
        assert_eq!(parse_score_line("SCORES: 5/5", 3), None);
        assert_eq!(parse_score_line("SCORES: 6/5/5", 3), None);
        assert_eq!(parse_score_line("great work overall", 3), None);
        assert_eq!(parse_score_line("SCORES: 5/5/5\nthanks", 3), None);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration_ms("0"), Some(0));
        assert_eq!(parse_duration_ms("30d"), Some(30 * 86_400_000));
        assert_eq!(parse_duration_ms("15m"), Some(900_000));
        assert_eq!(parse_duration_ms("250ms"), Some(250));
        assert_eq!(parse_duration_ms("3w"), None);
        assert_eq!(parse_duration_ms("h"), None);
    }

    #[test]
    fn table_alignment() {
        let pairs = vec![TextPair {
            id: "a".into(),
            candidate: "x y".into(),
            reference: "x z".into(),
        }];
        let r = AnyReport::Similarity(pair_similarity(&pairs, Mode::Privacy, Task::MathNumeric, "swap", "d", 1, 1000));
        let t = render_table(&[r.clone(), r]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("method"));
        assert!(lines[2].contains("lower") && lines[2].contains("absent"));
        assert_eq!(lines[2], lines[3]);
    }
}
