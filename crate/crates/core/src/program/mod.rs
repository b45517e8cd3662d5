//! The program engine: a small assignment-call language over the GV
//! operations, its checker and executor, and prompt assembly for generators.

pub mod ast;
pub mod check;
pub mod exec;
pub mod prompt;

pub use ast::{parse_program, Arg, Call, Kwarg, Program, Statement, SyntaxError};
pub use check::{check_program, ApiRegistry, CheckReport, CheckedProgram, Issue, Kind};
pub use exec::{call_builtin, execute_program, ExecError, ExecOptions, Execution, Status, Trace, TraceEntry, Value, DEFAULT_TIMEOUT};
pub use prompt::{assemble_prompt, generate_program, Generation, GenerationError, Ice, IceStore, PromptError, INSTRUCTION};
