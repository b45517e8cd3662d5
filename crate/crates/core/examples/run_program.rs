//! Parse, check and execute a visual program against a synthetic city, then
//! show the execution trace and what the checker says about a broken one.
//!
//!     cargo run --release --example run_program [program_file]

use std::time::Duration;

use geoprog::eval::suite::SynthSuite;
use geoprog::program::{check_program, execute_program, parse_program, ApiRegistry, CheckedProgram, ExecOptions};
use geoprog::scene::synth::SynthSpec;

const DEFAULT: &str = "\
SEG0=GetLandmarkSeg(query='The View')
SEG1=SegAround(area=SEG0, distance=60)
DETS=GetObjectSeg(query='car', area=SEG1)
ANSWER=Count(dets=DETS)
";

const BROKEN: &str = "\
SEG0=GetLandmarkSeg(query='The View')
SEG0=SegDirection(seg=SEG0, direction='up')
ANSWER=MeasureDist(from=SEG0, to=SEG9, units='feet')
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEFAULT.to_string(),
    };
    let api = ApiRegistry::standard();
    let program = CheckedProgram::new(parse_program(&text)?, api)?;
    println!("{}", program.program());

    let suite = SynthSuite::generate(7, &SynthSpec::default())?;
    let ctx = suite.oracle_catalog().context(&suite.scene_id, None)?;
    let out = std::env::temp_dir().join("geoprog_program");
    let opts = ExecOptions { timeout: Duration::from_secs(30), artifact_dir: Some(out.join("segments")) };
    let run = execute_program(&program, &ctx, &opts);

    for e in &run.trace.statements {
        println!("  {:<8} {:<16} {:?} -> {} {}", e.target, e.func, e.status, e.value_kind, e.artifact_path.as_deref().unwrap_or(""));
    }
    println!("answer: {}", run.value.summary());
    run.trace.save(&out.join("trace.json"))?;
    println!("trace and segment masks in {}", out.display());

    println!("\nchecking:\n{BROKEN}");
    for issue in check_program(&parse_program(BROKEN)?, api).issues {
        println!("  {issue}");
    }
    match parse_program("ANSWER=Count(dets=DETS") {
        Ok(_) => {}
        Err(e) => println!("  {e}"),
    }
    Ok(())
}
