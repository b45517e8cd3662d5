//! Interpreter: runs checked programs against a [`GeoContext`]. Every failure
//! becomes a `None` answer; a per-statement trace is always produced.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Arg, Call};
use super::check::{ApiRegistry, CheckedProgram, Kind};
use crate::gv::{Compass, DetectionSet, GeoContext, GvError};
use crate::segment::Segment;

/// Default wall-clock budget per program.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Segment(Segment),
    Number(f64),
    Text(String),
    Boolean(bool),
    Detections(DetectionSet),
    None,
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Segment(_) => "segment",
            Value::Number(_) => "number",
            Value::Text(_) => "text",
            Value::Boolean(_) => "boolean",
            Value::Detections(_) => "detections",
            Value::None => "none",
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Value::None)
    }

    pub fn as_segment(&self) -> Option<&Segment> {
        match self {
            Value::Segment(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Detections(d) => Some(d.len() as f64),
            _ => None,
        }
    }

    /// Textual form used for exact-match scoring.
    pub fn as_text(&self) -> Option<String> {
        match self {
            Value::Text(t) => Some(t.clone()),
            Value::Boolean(b) => Some(if *b { "yes" } else { "no" }.to_string()),
            _ => None,
        }
    }

    /// Compact JSON summary for reports; masks are reduced to pixel counts.
    pub fn summary(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Value::Segment(s) => json!({ "kind": "segment", "pixels": s.count(), "flags": s.provenance.flags }),
            Value::Number(n) => json!({ "kind": "number", "value": n }),
            Value::Text(t) => json!({ "kind": "text", "value": t }),
            Value::Boolean(b) => json!({ "kind": "boolean", "value": b }),
            Value::Detections(d) => json!({ "kind": "detections", "count": d.len(), "boxes": d.boxes, "scores": d.scores }),
            Value::None => json!({ "kind": "none" }),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Gv(#[from] GvError),
    #[error("{func}: argument {arg} must be {expected}, got {found}")]
    Kind { func: String, arg: String, expected: Kind, found: &'static str },
    #[error("{func}: missing argument {arg}")]
    Missing { func: String, arg: String },
    #[error("unknown function {0}")]
    Unknown(String),
    #[error("undefined variable {0}")]
    Undefined(String),
    #[error("operation panicked: {0}")]
    Panic(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
    Timeout,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub target: String,
    #[serde(rename = "fn")]
    pub func: String,
    pub status: Status,
    pub value_kind: String,
    pub artifact_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub statements: Vec<TraceEntry>,
}

impl Trace {
    /// First statement that did not finish, as (index, entry).
    pub fn failure(&self) -> Option<(usize, &TraceEntry)> {
        self.statements.iter().enumerate().find(|(_, e)| matches!(e.status, Status::Error | Status::Timeout))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self).expect("trace serializes"))
    }
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub timeout: Duration,
    /// Where intermediate segment thumbnails go; none are written when unset.
    pub artifact_dir: Option<PathBuf>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { timeout: DEFAULT_TIMEOUT, artifact_dir: None }
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub value: Value,
    pub trace: Trace,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "unknown panic".into())
}

struct Interp<'a> {
    ctx: &'a GeoContext,
    env: HashMap<String, Value>,
    deadline: Instant,
    timeout: Duration,
}

struct Args {
    func: String,
    values: HashMap<String, Value>,
}

impl Args {
    fn take(&mut self, name: &str) -> Result<Value, ExecError> {
        self.values.remove(name).ok_or_else(|| ExecError::Missing { func: self.func.clone(), arg: name.into() })
    }

    fn mismatch(&self, arg: &str, expected: Kind, v: &Value) -> ExecError {
        ExecError::Kind { func: self.func.clone(), arg: arg.into(), expected, found: v.kind_name() }
    }

    fn segment(&mut self, name: &str) -> Result<Segment, ExecError> {
        match self.take(name)? {
            Value::Segment(s) => Ok(s),
            v => Err(self.mismatch(name, Kind::Segment, &v)),
        }
    }

    fn opt_segment(&mut self, name: &str) -> Result<Option<Segment>, ExecError> {
        if self.values.contains_key(name) {
            self.segment(name).map(Some)
        } else {
            Ok(None)
        }
    }

    fn number(&mut self, name: &str) -> Result<f64, ExecError> {
        match self.take(name)? {
            Value::Number(n) => Ok(n),
            v => Err(self.mismatch(name, Kind::Number, &v)),
        }
    }

    fn text(&mut self, name: &str) -> Result<String, ExecError> {
        match self.take(name)? {
            Value::Text(t) => Ok(t),
            v => Err(self.mismatch(name, Kind::Text, &v)),
        }
    }

    fn boolean(&mut self, name: &str) -> Result<bool, ExecError> {
        match self.take(name)? {
            Value::Boolean(b) => Ok(b),
            v => Err(self.mismatch(name, Kind::Boolean, &v)),
        }
    }

    fn detections(&mut self, name: &str) -> Result<DetectionSet, ExecError> {
        match self.take(name)? {
            Value::Detections(d) => Ok(d),
            v => Err(self.mismatch(name, Kind::Detections, &v)),
        }
    }
}

impl Interp<'_> {
    fn check_deadline(&self) -> Result<(), ExecError> {
        if Instant::now() > self.deadline {
            return Err(ExecError::Timeout(self.timeout));
        }
        Ok(())
    }

    fn arg(&self, a: &Arg) -> Result<Value, ExecError> {
        Ok(match a {
            Arg::Str(s) => Value::Text(s.clone()),
            Arg::Num(n) => Value::Number(*n),
            Arg::Var(v) => self.env.get(v).cloned().ok_or_else(|| ExecError::Undefined(v.clone()))?,
            Arg::Call(c) => self.call(c)?,
        })
    }

    fn call(&self, call: &Call) -> Result<Value, ExecError> {
        self.check_deadline()?;
        let sig = ApiRegistry::standard().get(&call.func).ok_or_else(|| ExecError::Unknown(call.func.clone()))?;
        let mut values = HashMap::new();
        for k in &call.kwargs {
            // alias names resolve to the canonical parameter
            let name = sig.param(&k.name).map_or(k.name.as_str(), |p| p.name);
            values.insert(name.to_string(), self.arg(&k.value)?);
        }
        let mut args = Args { func: call.func.clone(), values };
        let ctx = self.ctx;
        let out = catch_unwind(AssertUnwindSafe(|| dispatch(ctx, &call.func, &mut args))).map_err(|p| ExecError::Panic(panic_message(p)))??;
        self.check_deadline()?;
        Ok(out)
    }
}

fn compare(op: &str, a: f64, b: f64) -> bool {
    match op {
        "GT" => a > b,
        "GE" => a >= b,
        "LT" => a < b,
        "LE" => a <= b,
        _ => a == b,
    }
}

fn dispatch(ctx: &GeoContext, func: &str, a: &mut Args) -> Result<Value, ExecError> {
    Ok(match func {
        "GetLandmarkSeg" => Value::Segment(ctx.get_landmark_seg(&a.text("query")?)?),
        "GetStructureSeg" => {
            let q = a.text("query")?;
            Value::Segment(ctx.get_structure_seg(&q, a.opt_segment("area")?.as_ref())?)
        }
        "SegAround" => {
            let s = a.segment("area")?;
            Value::Segment(ctx.seg_around(&s, a.number("distance")?)?)
        }
        "SegDirection" => {
            let s = a.segment("seg")?;
            let d: Compass = a.text("direction")?.parse()?;
            Value::Segment(ctx.seg_direction(&s, d)?)
        }
        "SegBetween" => {
            let s1 = a.segment("seg1")?;
            Value::Segment(ctx.seg_between(&s1, &a.segment("seg2")?)?)
        }
        "LargestSeg" => Value::Segment(ctx.largest_seg(&a.segment("segs")?)?),
        "MeasureDist" => {
            let s1 = a.segment("from")?;
            Value::Number(ctx.measure_dist(&s1, &a.segment("to")?)?)
        }
        "MeasureHeight" => Value::Number(ctx.measure_height(&a.segment("area")?)?),
        "GetObjectSeg" => {
            let q = a.text("query")?;
            Value::Detections(ctx.get_object_seg(&q, a.opt_segment("area")?.as_ref())?)
        }
        _ => eval_builtin(func, a)?,
    })
}

/// Pure helpers for counting, comparison and answer formatting.
fn eval_builtin(func: &str, a: &mut Args) -> Result<Value, ExecError> {
    Ok(match func {
        "Count" => Value::Number(a.detections("dets")?.len() as f64),
        "GT" | "GE" | "LT" | "LE" | "EQ" => {
            let x = a.number("a")?;
            Value::Boolean(compare(func, x, a.number("b")?))
        }
        "Exists" => Value::Boolean(!a.segment("seg")?.is_empty()),
        "IfElse" => {
            let c = a.boolean("cond")?;
            let (x, y) = (a.take("a")?, a.take("b")?);
            if c {
                x
            } else {
                y
            }
        }
        "YesNo" => Value::Text(if a.boolean("b")? { "yes" } else { "no" }.into()),
        other => return Err(ExecError::Unknown(other.into())),
    })
}

/// Standalone builtin evaluation over already-computed values.
pub fn call_builtin(func: &str, args: Vec<(&str, Value)>) -> Result<Value, ExecError> {
    let mut a = Args { func: func.into(), values: args.into_iter().map(|(k, v)| (k.to_string(), v)).collect() };
    eval_builtin(func, &mut a)
}

fn write_artifact(dir: &Path, index: usize, target: &str, seg: &Segment) -> Option<String> {
    let path = dir.join(format!("{index:02}_{target}.png"));
    let png = seg.to_png().ok()?;
    crate::imageio::write_file(&path, &png).ok()?;
    Some(path.to_string_lossy().into_owned())
}

pub fn execute_program(program: &CheckedProgram, ctx: &GeoContext, opts: &ExecOptions) -> Execution {
    let mut interp = Interp { ctx, env: HashMap::new(), deadline: Instant::now() + opts.timeout, timeout: opts.timeout };
    let mut trace = Trace::default();
    let mut failed = false;
    for (i, st) in program.program().statements.iter().enumerate() {
        let mut entry =
            TraceEntry { target: st.target.clone(), func: st.call.func.clone(), status: Status::Skipped, value_kind: "none".into(), artifact_path: None, message: None };
        if !failed {
            match interp.call(&st.call) {
                Ok(v) => {
                    entry.status = Status::Ok;
                    entry.value_kind = v.kind_name().into();
                    if let (Some(dir), Value::Segment(s)) = (&opts.artifact_dir, &v) {
                        entry.artifact_path = write_artifact(dir, i, &st.target, s);
                    }
                    interp.env.insert(st.target.clone(), v);
                }
                Err(e) => {
                    entry.status = if matches!(e, ExecError::Timeout(_)) { Status::Timeout } else { Status::Error };
                    entry.message = Some(e.to_string());
                    failed = true;
                }
            }
        }
        trace.statements.push(entry);
    }
    let value = if failed { Value::None } else { interp.env.remove("ANSWER").unwrap_or(Value::None) };
    Execution { value, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins() {
        let empty = DetectionSet::empty(crate::render::TopDownView::new([0.0, 1.0], 1, 1, 1.0).unwrap());
        assert_eq!(call_builtin("Count", vec![("dets", Value::Detections(empty))]).unwrap(), Value::Number(0.0));
        assert_eq!(call_builtin("GE", vec![("a", Value::Number(2.0)), ("b", Value::Number(2.0))]).unwrap(), Value::Boolean(true));
        assert_eq!(call_builtin("GT", vec![("a", Value::Number(2.0)), ("b", Value::Number(2.0))]).unwrap(), Value::Boolean(false));
        assert_eq!(call_builtin("YesNo", vec![("b", Value::Boolean(true))]).unwrap(), Value::Text("yes".into()));
        let pick = call_builtin("IfElse", vec![("cond", Value::Boolean(false)), ("a", Value::Text("A".into())), ("b", Value::Text("B".into()))]);
        assert_eq!(pick.unwrap(), Value::Text("B".into()));
        assert!(matches!(call_builtin("GT", vec![("a", Value::Text("x".into())), ("b", Value::Number(1.0))]), Err(ExecError::Kind { .. })));
    }
}
