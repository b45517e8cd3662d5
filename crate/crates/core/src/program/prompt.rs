//! In-context examples, prompt layout and generation with one repair retry.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::parse_program;
use super::check::{ApiRegistry, CheckedProgram};
use crate::providers::{ProgramGenerator, ProviderError};

/// Closing instruction; `<QUERY>` is replaced by the user query.
pub const INSTRUCTION: &str = "Think step by step and generate a program that answers the question.\nQuery: <QUERY>";

const BUILTIN_ICES: &str = include_str!("../../assets/ices.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ice {
    pub query: String,
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("requested {requested} examples but the store holds {available}")]
    InsufficientExamples { requested: usize, available: usize },
    #[error("example {index} ({query:?}) is invalid: {reason}")]
    InvalidExample { index: usize, query: String, reason: String },
    #[error("malformed example file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered query/program pairs; every program parses and checks.
#[derive(Debug, Clone, PartialEq)]
pub struct IceStore {
    examples: Vec<Ice>,
}

impl IceStore {
    pub fn new(examples: Vec<Ice>) -> Result<Self, PromptError> {
        for (index, ice) in examples.iter().enumerate() {
            let invalid = |reason: String| PromptError::InvalidExample { index, query: ice.query.clone(), reason };
            let ast = parse_program(&ice.program).map_err(|e| invalid(e.to_string()))?;
            CheckedProgram::new(ast, ApiRegistry::standard()).map_err(|r| invalid(r.to_string()))?;
            if ice.query.contains('\n') {
                return Err(invalid("query spans several lines".into()));
            }
        }
        Ok(Self { examples })
    }

    /// The fifteen examples shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_ICES).expect("bundled examples are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let examples: Vec<Ice> = serde_json::from_str(text).map_err(|e| PromptError::Malformed(e.to_string()))?;
        Self::new(examples)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Ice] {
        &self.examples
    }
}

fn ice_block(ice: &Ice) -> String {
    let mut s = format!("Query: {}\nProgram:\n", ice.query);
    for line in ice.program.lines().filter(|l| !l.trim().is_empty()) {
        s.push_str("  ");
        s.push_str(line.trim());
        s.push('\n');
    }
    s
}

/// The first `n` examples in store order, a blank line after each, then the
/// instruction with the query substituted.
pub fn assemble_prompt(query: &str, store: &IceStore, n: usize) -> Result<String, PromptError> {
    if n > store.len() {
        return Err(PromptError::InsufficientExamples { requested: n, available: store.len() });
    }
    let mut out = String::new();
    for ice in &store.examples[..n] {
        out.push_str(&ice_block(ice));
        out.push('\n');
    }
    out.push_str(&INSTRUCTION.replace("<QUERY>", query.trim()));
    out.push('\n');
    Ok(out)
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("program generation failed after {attempts} attempts: {last_error}")]
    GenerationFailed { attempts: usize, last_error: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub program: CheckedProgram,
    /// 1 when the first reply was usable, 2 after a repair round.
    pub attempts: usize,
    pub prompt: String,
}

/// Pull program lines out of a reply: the first fenced block if any, minus a
/// leading `Program:` label.
fn extract_program(text: &str) -> String {
    let body = match text.split_once("```") {
        Some((_, rest)) => {
            let rest = rest.split_once('\n').map_or("", |(_, r)| r);
            rest.split_once("```").map_or(rest, |(b, _)| b)
        }
        None => text,
    };
    body.lines()
        .filter(|l| l.trim() != "Program:")
        .collect::<Vec<_>>()
        .join("\n")
}

fn validate(text: &str, api: &ApiRegistry) -> Result<CheckedProgram, String> {
    let ast = parse_program(&extract_program(text)).map_err(|e| e.to_string())?;
    CheckedProgram::new(ast, api).map_err(|r| r.to_string())
}

/// Ask the generator for a program; a reply that fails to parse or check is
/// sent back once with the error message.
pub fn generate_program(
    query: &str,
    store: &IceStore,
    n: usize,
    generator: &dyn ProgramGenerator,
    api: &ApiRegistry,
) -> Result<Generation, GenerationError> {
    let prompt = assemble_prompt(query, store, n)?;
    let first = generator.generate(&prompt)?;
    let err = match validate(&first, api) {
        Ok(program) => return Ok(Generation { program, attempts: 1, prompt }),
        Err(e) => e,
    };
    let retry = format!(
        "{prompt}\nYour previous program was rejected:\n{first}\nError: {err}\n\n{}\n",
        INSTRUCTION.replace("<QUERY>", query.trim())
    );
    let second = generator.generate(&retry)?;
    validate(&second, api)
        .map(|program| Generation { program, attempts: 2, prompt: retry })
        .map_err(|last_error| GenerationError::GenerationFailed { attempts: 2, last_error })
}
