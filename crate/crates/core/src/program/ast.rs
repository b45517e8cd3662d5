//! Program syntax tree and a hand-written recursive-descent parser.
//!
//! ```text
//! program := stmt+
//! stmt    := TARGET '=' call NEWLINE
//! call    := NAME '(' [kwarg {',' kwarg}] ')'
//! kwarg   := NAME '=' (STRING | NUMBER | TARGET | call)
//! ```
//!
//! Targets match `[A-Z][A-Z0-9_]*`. Strings take single or double quotes with
//! backslash escapes. Blank lines and `#` comments are ignored.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Program {
    pub statements: Vec<Statement>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Statement {
    pub target: String,
    pub call: Call,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Call {
    pub func: String,
    pub kwargs: Vec<Kwarg>,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kwarg {
    pub name: String,
    pub value: Arg,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Arg {
    Str(String),
    Num(f64),
    Var(String),
    Call(Box<Call>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {line}:{col}: expected {}, found {found}", expected.join(" or "))]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub found: String,
}

pub fn is_target_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_uppercase()) && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

impl Cursor {
    fn new(src: &str) -> Self {
        Self { chars: src.chars().collect(), pos: 0, line: 1, col: 1 }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    /// Skip spaces and tabs (not newlines).
    fn skip_inline_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
    }

    /// Skip whitespace, newlines and comments between statements.
    fn skip_blank(&mut self) {
        loop {
            match self.peek() {
                Some(' ' | '\t' | '\r' | '\n') => {
                    self.bump();
                }
                Some('#') => self.skip_comment(),
                _ => break,
            }
        }
    }

    fn skip_comment(&mut self) {
        while self.peek().is_some_and(|c| c != '\n') {
            self.bump();
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some('\n') => "newline".into(),
            Some(c) => format!("{c:?}"),
        }
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        SyntaxError { line: self.line, col: self.col, expected: expected.iter().map(|s| s.to_string()).collect(), found: self.found() }
    }

    fn expect(&mut self, c: char) -> Result<(), SyntaxError> {
        self.skip_inline_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&format!("'{c}'")]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SyntaxError> {
        self.skip_inline_ws();
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return Err(self.error(&[what]));
        }
        let mut s = String::new();
        while let Some(c) = self.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
            s.push(c);
            self.bump();
        }
        Ok(s)
    }

    fn string(&mut self) -> Result<String, SyntaxError> {
        let quote = self.bump().expect("caller checked quote");
        let mut s = String::new();
        loop {
            match self.peek() {
                None | Some('\n') => return Err(self.error(&["closing quote"])),
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some(c) => s.push(c),
                        None => return Err(self.error(&["escaped character"])),
                    }
                }
                Some(c) if c == quote => {
                    self.bump();
                    return Ok(s);
                }
                Some(c) => {
                    s.push(c);
                    self.bump();
                }
            }
        }
    }

    fn number(&mut self) -> Result<f64, SyntaxError> {
        let (line, col) = (self.line, self.col);
        let mut s = String::new();
        if matches!(self.peek(), Some('-' | '+')) {
            s.push(self.bump().unwrap());
        }
        while let Some(c) = self.peek().filter(|c| c.is_ascii_digit() || *c == '.') {
            s.push(c);
            self.bump();
        }
        let digits = s.trim_start_matches(['-', '+']);
        if digits.is_empty() || digits.starts_with('.') || digits.ends_with('.') || digits.matches('.').count() > 1 {
            return Err(SyntaxError { line, col, expected: vec!["decimal number".into()], found: format!("{s:?}") });
        }
        s.parse().map_err(|_| SyntaxError { line, col, expected: vec!["decimal number".into()], found: format!("{s:?}") })
    }

    fn call(&mut self, func: String, line: usize, col: usize) -> Result<Call, SyntaxError> {
        self.expect('(')?;
        let mut kwargs = Vec::new();
        self.skip_inline_ws();
        if self.peek() == Some(')') {
            self.bump();
            return Ok(Call { func, kwargs, line, col });
        }
        loop {
            let name = self.ident("argument name")?;
            self.expect('=')?;
            self.skip_inline_ws();
            let value = match self.peek() {
                Some('\'' | '"') => Arg::Str(self.string()?),
                Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => Arg::Num(self.number()?),
                Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                    let (l, c0) = (self.line, self.col);
                    let id = self.ident("value")?;
                    self.skip_inline_ws();
                    if self.peek() == Some('(') {
                        Arg::Call(Box::new(self.call(id, l, c0)?))
                    } else if is_target_name(&id) {
                        Arg::Var(id)
                    } else {
                        return Err(SyntaxError { line: l, col: c0, expected: vec!["string".into(), "number".into(), "variable".into(), "call".into()], found: id });
                    }
                }
                _ => return Err(self.error(&["string", "number", "variable", "call"])),
            };
            kwargs.push(Kwarg { name, value });
            self.skip_inline_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(')') => {
                    self.bump();
                    return Ok(Call { func, kwargs, line, col });
                }
                _ => return Err(self.error(&["','", "')'"])),
            }
        }
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        let (line, col) = (self.line, self.col);
        let target = self.ident("assignment target")?;
        if !is_target_name(&target) {
            return Err(SyntaxError { line, col, expected: vec!["upper-case target".into()], found: target });
        }
        self.expect('=')?;
        self.skip_inline_ws();
        let (cl, cc) = (self.line, self.col);
        let func = self.ident("function name")?;
        let call = self.call(func, cl, cc)?;
        self.skip_inline_ws();
        if self.peek() == Some('#') {
            self.skip_comment();
        }
        match self.peek() {
            None => {}
            Some('\n') => {
                self.bump();
            }
            _ => return Err(self.error(&["newline"])),
        }
        Ok(Statement { target, call, line })
    }
}

pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    let mut cur = Cursor::new(text);
    let mut statements = Vec::new();
    cur.skip_blank();
    while cur.peek().is_some() {
        statements.push(cur.statement()?);
        cur.skip_blank();
    }
    if statements.is_empty() {
        return Err(cur.error(&["statement"]));
    }
    Ok(Program { statements, source: text.to_string() })
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Str(s) => write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'").replace('\n', "\\n")),
            Arg::Num(n) => {
                if n.fract() == 0.0 && n.abs() < 1e15 {
                    write!(f, "{}", *n as i64)
                } else {
                    write!(f, "{n}")
                }
            }
            Arg::Var(v) => f.write_str(v),
            Arg::Call(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.func)?;
        for (i, k) in self.kwargs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}={}", k.name, k.value)?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Program {
    /// Canonical one-statement-per-line form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statements {
            writeln!(f, "{}={}", s.target, s.call)?;
        }
        Ok(())
    }
}
