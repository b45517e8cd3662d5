//! Sweep the number of in-context examples on the synthetic suite with a
//! generator that refuses some queries at low counts, and print how the
//! generation success rate recovers.
//!
//!     cargo run --release --example ice_sweep

use std::sync::Arc;

use geoprog::eval::suite::SynthSuite;
use geoprog::eval::{ice_sweep, load_dataset, Engine};
use geoprog::providers::FailurePlan;
use geoprog::scene::synth::SynthSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let suite = SynthSuite::generate(7, &SynthSpec::default())?;
    let dir = std::env::temp_dir().join("geoprog_sweep");
    let records = load_dataset(suite.write(&dir)?)?;

    let queries: Vec<&str> = suite.queries.iter().map(|q| q.query.as_str()).collect();
    let plan = FailurePlan::default().fail(5, queries[..9].iter().copied()).fail(10, queries[..3].iter().copied());
    let mut engine = Engine::new(Arc::new(suite.oracle_catalog()), Arc::new(suite.stub_generator().with_failures(plan)));
    engine.jobs = 4;

    for report in ice_sweep(&records, &engine, &[5, 10, 15]) {
        let per_task: Vec<String> = report.tasks.iter().map(|(t, m)| format!("{}={:.0}%", t.code(), m.generation_success_rate)).collect();
        println!(
            "n={:<2}  generated {:>6.2}%  None {:>2}/{}  {}",
            report.ice_count,
            report.generation_success_rate,
            report.none_count,
            report.total,
            per_task.join(" ")
        );
    }
    Ok(())
}
