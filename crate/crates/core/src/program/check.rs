//! Static checks against the operation catalogue.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use super::ast::{Arg, Call, Program};
use crate::gv::Compass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Kind {
    Segment,
    Number,
    Text,
    Boolean,
    Detections,
    /// Result kind decided at run time (IfElse).
    Any,
}

impl Kind {
    fn accepts(self, found: Kind) -> bool {
        self == Kind::Any || found == Kind::Any || self == found
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
    pub kind: Kind,
    pub required: bool,
}

const fn req(name: &'static str, kind: Kind) -> Param {
    Param { name, aliases: &[], kind, required: true }
}

const fn opt(name: &'static str, kind: Kind) -> Param {
    Param { name, aliases: &[], kind, required: false }
}

const fn alias(name: &'static str, aliases: &'static [&'static str], kind: Kind) -> Param {
    Param { name, aliases, kind, required: true }
}

#[derive(Debug, Clone)]
pub struct Signature {
    pub params: Vec<Param>,
    pub returns: Kind,
    pub builtin: bool,
}

impl Signature {
    /// Canonical parameter for an argument name, honouring aliases.
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name || p.aliases.contains(&name))
    }
}

/// Catalogue of callable names: the nine geographic operations plus builtins.
#[derive(Debug, Clone)]
pub struct ApiRegistry {
    fns: BTreeMap<&'static str, Signature>,
}

impl Default for ApiRegistry {
    fn default() -> Self {
        use Kind::*;
        let mut fns = BTreeMap::new();
        let mut add = |name, params: Vec<Param>, returns, builtin| {
            fns.insert(name, Signature { params, returns, builtin });
        };
        add("GetLandmarkSeg", vec![req("query", Text)], Segment, false);
        add("GetStructureSeg", vec![req("query", Text), opt("area", Segment)], Segment, false);
        add("SegAround", vec![alias("area", &["seg"], Segment), req("distance", Number)], Segment, false);
        add("SegDirection", vec![alias("seg", &["area"], Segment), req("direction", Text)], Segment, false);
        add("SegBetween", vec![req("seg1", Segment), req("seg2", Segment)], Segment, false);
        add("LargestSeg", vec![alias("segs", &["seg", "area"], Segment)], Segment, false);
        add("MeasureDist", vec![alias("from", &["seg1"], Segment), alias("to", &["seg2"], Segment)], Number, false);
        add("MeasureHeight", vec![alias("area", &["seg"], Segment)], Number, false);
        add("GetObjectSeg", vec![req("query", Text), opt("area", Segment)], Detections, false);
        add("Count", vec![req("dets", Detections)], Number, true);
        for cmp in ["GT", "GE", "LT", "LE", "EQ"] {
            add(cmp, vec![req("a", Number), req("b", Number)], Boolean, true);
        }
        add("Exists", vec![alias("seg", &["area"], Segment)], Boolean, true);
        add("IfElse", vec![req("cond", Boolean), req("a", Any), req("b", Any)], Any, true);
        add("YesNo", vec![req("b", Boolean)], Text, true);
        Self { fns }
    }
}

impl ApiRegistry {
    /// Shared default catalogue.
    pub fn standard() -> &'static ApiRegistry {
        static API: std::sync::LazyLock<ApiRegistry> = std::sync::LazyLock::new(ApiRegistry::default);
        &API
    }

    pub fn get(&self, name: &str) -> Option<&Signature> {
        self.fns.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.fns.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Issue {
    UnknownFunction { line: usize, func: String },
    UnknownArgument { line: usize, func: String, arg: String },
    DuplicateArgument { line: usize, func: String, arg: String },
    MissingArgument { line: usize, func: String, arg: String },
    KindMismatch { line: usize, func: String, arg: String, expected: Kind, found: Kind },
    InvalidDirection { line: usize, value: String },
    UseBeforeDef { line: usize, name: String },
    Reassignment { line: usize, name: String },
    MissingAnswer,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::UnknownFunction { line, func } => write!(f, "line {line}: unknown function {func}"),
            Issue::UnknownArgument { line, func, arg } => write!(f, "line {line}: {func} has no argument {arg}"),
            Issue::DuplicateArgument { line, func, arg } => write!(f, "line {line}: {func} argument {arg} given twice"),
            Issue::MissingArgument { line, func, arg } => write!(f, "line {line}: {func} is missing argument {arg}"),
            Issue::KindMismatch { line, func, arg, expected, found } => {
                write!(f, "line {line}: {func}.{arg} expects {expected}, got {found}")
            }
            Issue::InvalidDirection { line, value } => write!(f, "line {line}: {value:?} is not a compass direction"),
            Issue::UseBeforeDef { line, name } => write!(f, "line {line}: {name} used before assignment"),
            Issue::Reassignment { line, name } => write!(f, "line {line}: {name} assigned twice"),
            Issue::MissingAnswer => f.write_str("last statement must assign ANSWER"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub issues: Vec<Issue>,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for CheckReport {}

struct Checker<'a> {
    api: &'a ApiRegistry,
    env: HashMap<String, Kind>,
    issues: Vec<Issue>,
}

impl Checker<'_> {
    /// Kind produced by a call, recording issues on the way. Unknown calls yield `Any`.
    fn call(&mut self, call: &Call, line: usize) -> Kind {
        let Some(sig) = self.api.get(&call.func) else {
            self.issues.push(Issue::UnknownFunction { line, func: call.func.clone() });
            for k in &call.kwargs {
                self.arg(&k.value, line);
            }
            return Kind::Any;
        };
        let mut seen: Vec<&str> = Vec::new();
        let mut branch_kinds = Vec::new();
        for k in &call.kwargs {
            let found = self.arg(&k.value, line);
            let Some(p) = sig.param(&k.name) else {
                self.issues.push(Issue::UnknownArgument { line, func: call.func.clone(), arg: k.name.clone() });
                continue;
            };
            if seen.contains(&p.name) {
                self.issues.push(Issue::DuplicateArgument { line, func: call.func.clone(), arg: p.name.to_string() });
            }
            seen.push(p.name);
            if !p.kind.accepts(found) {
                self.issues.push(Issue::KindMismatch { line, func: call.func.clone(), arg: p.name.into(), expected: p.kind, found });
            }
            if call.func == "SegDirection" && p.name == "direction" {
                if let Arg::Str(s) = &k.value {
                    if s.parse::<Compass>().is_err() {
                        self.issues.push(Issue::InvalidDirection { line, value: s.clone() });
                    }
                }
            }
            if call.func == "IfElse" && p.name != "cond" {
                branch_kinds.push(found);
            }
        }
        for p in sig.params.iter().filter(|p| p.required && !seen.contains(&p.name)) {
            self.issues.push(Issue::MissingArgument { line, func: call.func.clone(), arg: p.name.into() });
        }
        match branch_kinds.as_slice() {
            [a, b] if a == b => *a,
            _ => sig.returns,
        }
    }

    fn arg(&mut self, arg: &Arg, line: usize) -> Kind {
        match arg {
            Arg::Str(_) => Kind::Text,
            Arg::Num(_) => Kind::Number,
            Arg::Var(name) => match self.env.get(name) {
                Some(&k) => k,
                None => {
                    self.issues.push(Issue::UseBeforeDef { line, name: name.clone() });
                    Kind::Any
                }
            },
            Arg::Call(c) => self.call(c, line),
        }
    }
}

pub fn check_program(program: &Program, api: &ApiRegistry) -> CheckReport {
    let mut ck = Checker { api, env: HashMap::new(), issues: Vec::new() };
    for st in &program.statements {
        let kind = ck.call(&st.call, st.line);
        if ck.env.contains_key(&st.target) {
            ck.issues.push(Issue::Reassignment { line: st.line, name: st.target.clone() });
        } else {
            ck.env.insert(st.target.clone(), kind);
        }
    }
    if program.statements.last().is_none_or(|s| s.target != "ANSWER") {
        ck.issues.push(Issue::MissingAnswer);
    }
    CheckReport { issues: ck.issues }
}

/// A program that passed [`check_program`]; the only form the executor accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedProgram(Program);

impl CheckedProgram {
    pub fn new(program: Program, api: &ApiRegistry) -> Result<Self, CheckReport> {
        let report = check_program(&program, api);
        if report.is_clean() {
            Ok(Self(program))
        } else {
            Err(report)
        }
    }

    pub fn program(&self) -> &Program {
        &self.0
    }

    pub fn into_inner(self) -> Program {
        self.0
    }
}
