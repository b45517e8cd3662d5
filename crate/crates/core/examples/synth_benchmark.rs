//! Build the seed-7 synthetic suite, run it with oracle providers and print
//! per-task metrics.
//!
//!     cargo run --release --example synth_benchmark [seed] [jobs]

use std::sync::Arc;
use std::time::Instant;

use geoprog::eval::suite::SynthSuite;
use geoprog::eval::{load_dataset, run_benchmark, Engine};
use geoprog::scene::synth::SynthSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(7), |s| s.parse())?;
    let jobs: usize = args.next().map_or(Ok(4), |s| s.parse())?;

    let start = Instant::now();
    let suite = SynthSuite::generate(seed, &SynthSpec::default())?;
    let dir = std::env::temp_dir().join(format!("geoprog_suite_{seed}"));
    let dataset = suite.write(&dir)?;
    let records = load_dataset(&dataset)?;

    let mut engine = Engine::new(Arc::new(suite.oracle_catalog()), Arc::new(suite.stub_generator()));
    engine.jobs = jobs;
    engine.trace_dir = Some(dir.join("traces"));
    let report = run_benchmark(&records, &engine);
    report.save(&dir, "report")?;

    for (task, m) in &report.tasks {
        println!(
            "{task:6} n={:2} none={} loc={:?} miou={:?} mae={:?} em={:?}",
            m.queries, m.none_count, m.localization_accuracy, m.mean_iou, m.mae, m.exact_match
        );
    }
    for r in report.rows.iter().filter(|r| r.hit == Some(false) || r.correct == Some(false) || r.abs_error.is_some_and(|e| e > 0.5) || r.iou.is_some_and(|i| i < 0.85)) {
        println!("  weak: {} {:?} iou={:?} err={:?} {:?} {:?}", r.task, r.query, r.iou, r.abs_error, r.failed_step, r.error);
    }
    println!("{} queries in {:.1?}, artifacts in {}", report.total, start.elapsed(), dir.display());
    Ok(())
}
