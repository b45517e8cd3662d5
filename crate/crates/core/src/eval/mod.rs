//! Benchmark records, scoring and metric reports.

mod bench;
pub mod suite;

pub use bench::{ice_sweep, run_benchmark, Engine, SceneAssets, SceneCatalog};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{self, ImageError};
use crate::program::Value;
use crate::render::TopDownView;
use crate::segment::Segment;

/// Localization hit threshold for grounding queries (inclusive).
pub const IOU_THRESHOLD: f64 = 0.15;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("prediction and ground truth are on different grids")]
    GridMismatch,
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "GRD")]
    Grd,
    #[serde(rename = "CNT")]
    Cnt,
    #[serde(rename = "MES_H")]
    MesH,
    #[serde(rename = "MES_D")]
    MesD,
    #[serde(rename = "CMP")]
    Cmp,
    #[serde(rename = "SPR")]
    Spr,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Grd, Task::Cnt, Task::MesH, Task::MesD, Task::Cmp, Task::Spr];

    pub fn code(self) -> &'static str {
        match self {
            Task::Grd => "GRD",
            Task::Cnt => "CNT",
            Task::MesH => "MES_H",
            Task::MesD => "MES_D",
            Task::Cmp => "CMP",
            Task::Spr => "SPR",
        }
    }

    fn is_numeric(self) -> bool {
        matches!(self, Task::Cnt | Task::MesH | Task::MesD)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Task::ALL.into_iter().find(|t| t.code() == key).ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// Ground-truth answer of a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Expected {
    Mask(PathBuf),
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAnswer {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
struct RawRecord {
    scene: String,
    task: Task,
    query: String,
    #[serde(default)]
    answer: Option<RawAnswer>,
    #[serde(default)]
    gt_mask: Option<String>,
    #[serde(default)]
    view: Option<TopDownView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    /// 1-based line in the source file.
    pub line: usize,
    pub scene: String,
    pub task: Task,
    pub query: String,
    pub answer: Expected,
    pub view: Option<TopDownView>,
}

impl TaskRecord {
    /// Ground-truth mask of a grounding record, on its declared view.
    pub fn load_gt_mask(&self) -> Result<Segment, EvalError> {
        let Expected::Mask(path) = &self.answer else {
            return Err(EvalError::Other(format!("{} record has no mask", self.task)));
        };
        let view = self.view.ok_or_else(|| EvalError::Other("grounding record without view".into()))?;
        let (w, h, mask) = imageio::decode_mask(&std::fs::read(path)?)?;
        if (w, h) != (view.width, view.height) {
            return Err(EvalError::GridMismatch);
        }
        Ok(Segment::new(view, mask, "ground_truth"))
    }
}

fn validate(raw: RawRecord, line: usize, root: &Path) -> Result<TaskRecord, String> {
    if raw.query.trim().is_empty() {
        return Err("empty query".into());
    }
    if raw.scene.trim().is_empty() {
        return Err("empty scene id".into());
    }
    if let Some(v) = &raw.view {
        v.check().map_err(|e| e.to_string())?;
    }
    let answer = match (raw.task, raw.answer) {
        (Task::Grd, ans) => {
            let rel = match (raw.gt_mask, ans) {
                (Some(p), _) | (None, Some(RawAnswer::Text(p))) => p,
                _ => return Err("GRD record needs a gt_mask".into()),
            };
            if raw.view.is_none() {
                return Err("GRD record needs a view".into());
            }
            let path = root.join(rel);
            if !path.is_file() {
                return Err(format!("mask file {} not found", path.display()));
            }
            Expected::Mask(path)
        }
        (t, Some(RawAnswer::Number(n))) if t.is_numeric() => {
            if !n.is_finite() {
                return Err("answer must be finite".into());
            }
            Expected::Number(n)
        }
        (Task::Cmp, Some(RawAnswer::Text(s))) if !s.trim().is_empty() => Expected::Text(s),
        (Task::Spr, Some(RawAnswer::Text(s))) if matches!(normalize_text(&s).as_str(), "yes" | "no") => Expected::Text(s),
        (t, a) => {
            let found = match a {
                None => "no answer",
                Some(RawAnswer::Number(_)) => "a number",
                Some(RawAnswer::Text(_)) => "text",
            };
            let want = match t {
                Task::Spr => "yes/no",
                Task::Cmp => "non-empty text",
                _ => "a number",
            };
            return Err(format!("{t} answer must be {want}, found {found}"));
        }
    };
    Ok(TaskRecord { line, scene: raw.scene, task: raw.task, query: raw.query, answer, view: raw.view })
}

/// Parse JSON-lines records; mask paths resolve against `root`. Blank lines are skipped.
pub fn parse_dataset(text: &str, root: &Path) -> Result<Vec<TaskRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        if l.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(l).map_err(|e| EvalError::MalformedRecord { line, reason: e.to_string() })?;
        out.push(validate(raw, line, root).map_err(|reason| EvalError::MalformedRecord { line, reason })?);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<TaskRecord>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, path.parent().unwrap_or(Path::new(".")))
}

/// |pred ∩ gt| / |pred ∪ gt|; two empty masks score 1 and a missing prediction 0.
pub fn compute_iou(pred: Option<&Segment>, gt: &Segment) -> Result<f64, EvalError> {
    let Some(pred) = pred else { return Ok(0.0) };
    if !pred.same_grid(gt) {
        return Err(EvalError::GridMismatch);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.mask.iter().zip(&gt.mask) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// How unanswered queries enter the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonePolicy {
    /// Misses for accuracies, IoU 0, and absolute error |gt| (a zero answer) for MAE.
    #[default]
    Penalize,
    /// Left out of every metric; still counted as None.
    Skip,
}

impl FromStr for NonePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "penalize" | "max-error" | "miss" => Ok(Self::Penalize),
            "skip" => Ok(Self::Skip),
            _ => Err(format!("unknown none policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub none_policy: NonePolicy,
    pub iou_threshold: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { none_policy: NonePolicy::Penalize, iou_threshold: IOU_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub index: usize,
    pub scene: String,
    pub task: Task,
    pub query: String,
    pub expected: serde_json::Value,
    pub predicted: serde_json::Value,
    /// False for None answers and answers of the wrong kind.
    pub answered: bool,
    pub generated: bool,
    pub attempts: usize,
    pub iou: Option<f64>,
    pub hit: Option<bool>,
    pub abs_error: Option<f64>,
    pub correct: Option<bool>,
    pub failed_step: Option<String>,
    pub error: Option<String>,
}

/// Score one prediction. Unanswered rows get penalty values here; the Skip
/// policy drops them at aggregation time.
pub fn score_task(record: &TaskRecord, predicted: &Value, opts: &ScoreOptions) -> ScoredRow {
    let mut row = ScoredRow {
        index: 0,
        scene: record.scene.clone(),
        task: record.task,
        query: record.query.clone(),
        expected: match &record.answer {
            Expected::Mask(p) => serde_json::json!({ "mask": p }),
            Expected::Number(n) => serde_json::json!(n),
            Expected::Text(t) => serde_json::json!(t),
        },
        predicted: predicted.summary(),
        answered: false,
        generated: true,
        attempts: 0,
        iou: None,
        hit: None,
        abs_error: None,
        correct: None,
        failed_step: None,
        error: None,
    };
    match (&record.answer, record.task) {
        (Expected::Mask(_), _) => {
            let pred = predicted.as_segment();
            row.answered = pred.is_some();
            if !predicted.is_none() && pred.is_none() {
                row.error = Some(format!("expected a segment, got {}", predicted.kind_name()));
            }
            match record.load_gt_mask().and_then(|gt| compute_iou(pred, &gt)) {
                Ok(iou) => {
                    row.iou = Some(iou);
                    row.hit = Some(iou >= opts.iou_threshold);
                }
                Err(e) => {
                    row.iou = Some(0.0);
                    row.hit = Some(false);
                    row.error = Some(e.to_string());
                }
            }
        }
        (Expected::Number(gt), _) => {
            let pred = match predicted {
                Value::Number(n) if n.is_finite() => Some(*n),
                Value::Detections(_) => predicted.as_number(),
                _ => None,
            };
            if !predicted.is_none() && pred.is_none() {
                row.error = Some(format!("expected a number, got {}", predicted.kind_name()));
            }
            row.answered = pred.is_some();
            row.abs_error = Some(match pred {
                Some(p) => (p - gt).abs(),
                None => gt.abs(),
            });
        }
        (Expected::Text(gt), _) => {
            let pred = predicted.as_text();
            if !predicted.is_none() && pred.is_none() {
                row.error = Some(format!("expected text, got {}", predicted.kind_name()));
            }
            row.answered = pred.is_some();
            row.correct = Some(pred.is_some_and(|p| normalize_text(&p) == normalize_text(gt)));
        }
    }
    row
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub queries: usize,
    pub answered: usize,
    pub none_count: usize,
    pub generated: usize,
    /// Percent of queries whose program was generated and checked.
    pub generation_success_rate: f64,
    /// Percent of grounding queries with IoU at or above the threshold.
    pub localization_accuracy: Option<f64>,
    pub mean_iou: Option<f64>,
    pub mae: Option<f64>,
    /// Percent exact matches.
    pub exact_match: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub none_policy: NonePolicy,
    pub iou_threshold: f64,
    pub ice_count: usize,
    pub total: usize,
    pub none_count: usize,
    pub none_share: f64,
    pub generation_success_rate: f64,
    pub tasks: BTreeMap<Task, TaskMetrics>,
    pub rows: Vec<ScoredRow>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricsReport {
    /// Aggregate rows; the result does not depend on the input order.
    pub fn from_rows(mut rows: Vec<ScoredRow>, opts: &ScoreOptions, ice_count: usize) -> Self {
        rows.sort_by_key(|r| r.index);
        let mut tasks = BTreeMap::new();
        for task in Task::ALL {
            let of: Vec<&ScoredRow> = rows.iter().filter(|r| r.task == task).collect();
            if of.is_empty() {
                continue;
            }
            let counted: Vec<&ScoredRow> = of.iter().copied().filter(|r| r.answered || opts.none_policy == NonePolicy::Penalize).collect();
            let mut m = TaskMetrics {
                queries: of.len(),
                answered: of.iter().filter(|r| r.answered).count(),
                generated: of.iter().filter(|r| r.generated).count(),
                ..Default::default()
            };
            m.none_count = m.queries - m.answered;
            m.generation_success_rate = pct(m.generated, m.queries);
            match task {
                Task::Grd => {
                    let ious: Vec<f64> = counted.iter().filter_map(|r| r.iou).collect();
                    m.mean_iou = mean(&ious);
                    m.localization_accuracy = Some(pct(counted.iter().filter(|r| r.hit == Some(true)).count(), counted.len()));
                }
                Task::Cnt | Task::MesH | Task::MesD => {
                    m.mae = mean(&counted.iter().filter_map(|r| r.abs_error).collect::<Vec<_>>());
                }
                Task::Cmp | Task::Spr => {
                    m.exact_match = Some(pct(counted.iter().filter(|r| r.correct == Some(true)).count(), counted.len()));
                }
            }
            tasks.insert(task, m);
        }
        let total = rows.len();
        let none_count = rows.iter().filter(|r| !r.answered).count();
        let generated = rows.iter().filter(|r| r.generated).count();
        Self {
            none_policy: opts.none_policy,
            iou_threshold: opts.iou_threshold,
            ice_count,
            total,
            none_count,
            none_share: pct(none_count, total),
            generation_success_rate: pct(generated, total),
            tasks,
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "scene", "task", "query", "expected", "predicted", "answered", "generated", "attempts", "iou", "hit", "abs_error", "correct", "failed_step", "error"])
            .map_err(|e| EvalError::Other(e.to_string()))?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.index.to_string(),
                r.scene.clone(),
                r.task.to_string(),
                r.query.clone(),
                r.expected.to_string(),
                r.predicted.to_string(),
                r.answered.to_string(),
                r.generated.to_string(),
                r.attempts.to_string(),
                opt(r.iou.map(|v| v.to_string())),
                opt(r.hit.map(|v| v.to_string())),
                opt(r.abs_error.map(|v| v.to_string())),
                opt(r.correct.map(|v| v.to_string())),
                opt(r.failed_step.clone()),
                opt(r.error.clone()),
            ])
            .map_err(|e| EvalError::Other(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), EvalError> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&json, self.to_json())?;
        self.write_csv(std::fs::File::create(&csv)?)?;
        Ok((json, csv))
    }

    pub fn task(&self, t: Task) -> Option<&TaskMetrics> {
        self.tasks.get(&t)
    }
}
