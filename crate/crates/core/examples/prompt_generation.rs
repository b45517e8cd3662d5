//! Assemble a few-shot prompt from the built-in example store and turn a
//! generator reply into a checked program, including the repair round a bad
//! reply triggers.
//!
//!     cargo run --example prompt_generation [n_examples]

use std::sync::Mutex;

use geoprog::program::{assemble_prompt, generate_program, ApiRegistry, IceStore};
use geoprog::providers::{ProgramGenerator, ProviderError, StubGenerator};

/// Replies with a fixed list of texts in order, logging each prompt.
struct Scripted {
    replies: Mutex<Vec<&'static str>>,
    prompts: Mutex<Vec<String>>,
}

impl ProgramGenerator for Scripted {
    fn generate(&self, prompt: &str) -> Result<String, ProviderError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        Ok(self.replies.lock().unwrap().remove(0).to_string())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;
    let store = IceStore::builtin();
    let api = ApiRegistry::standard();
    let query = "How tall is the tower closest to Harbor Plaza?";

    let prompt = assemble_prompt(query, &store, n)?;
    println!("{} of {} examples, {} bytes\n---\n{}---", n, store.len(), prompt.len(), tail(&prompt, 14));

    let stub = StubGenerator::new([(
        query.to_string(),
        "```\nSEG0=GetLandmarkSeg(query='Harbor Plaza')\nSEG1=SegAround(area=SEG0,distance=100)\nSEG2=GetStructureSeg(query='tower',area=SEG1)\nANSWER=MeasureHeight(area=SEG2)\n```".to_string(),
    )]);
    let g = generate_program(query, &store, n, &stub, api)?;
    println!("stub, {} attempt(s):\n{}", g.attempts, g.program.program());

    let scripted = Scripted {
        replies: Mutex::new(vec![
            "SEG0=GetLandmarkSeg(name='Harbor Plaza')\nANSWER=MeasureHeight(area=SEG0)",
            "Program:\nSEG0=GetLandmarkSeg(query='Harbor Plaza')\nANSWER=MeasureHeight(area=SEG0)",
        ]),
        prompts: Mutex::new(Vec::new()),
    };
    let g = generate_program(query, &store, n, &scripted, api)?;
    println!("\nscripted, {} attempt(s):\n{}", g.attempts, g.program.program());
    let retry = scripted.prompts.lock().unwrap()[1].clone();
    println!("repair prompt ends with:\n---\n{}---", tail(&retry, 8));

    match generate_program("What is the meaning of life?", &store, n, &stub, api) {
        Ok(_) => println!("unexpected program"),
        Err(e) => println!("\nunknown query: {e}"),
    }
    Ok(())
}

fn tail(text: &str, lines: usize) -> String {
    let all: Vec<&str> = text.lines().collect();
    all[all.len().saturating_sub(lines)..].iter().map(|l| format!("{l}\n")).collect()
}
