//! Score predictions against a small hand-written dataset: a grounding mask,
//! a count and a yes/no answer, under both policies for unanswered queries.
//!
//!     cargo run --example score_masks

use geoprog::eval::{compute_iou, load_dataset, MetricsReport, NonePolicy, ScoreOptions, score_task};
use geoprog::imageio::write_file;
use geoprog::program::Value;
use geoprog::render::TopDownView;
use geoprog::segment::Segment;

fn square(view: TopDownView, r0: usize, c0: usize, side: usize) -> Segment {
    let mask = (0..view.pixel_count()).map(|i| (r0..r0 + side).contains(&(i / view.width)) && (c0..c0 + side).contains(&(i % view.width))).collect();
    Segment::new(view, mask, "square")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("geoprog_scoring");
    std::fs::create_dir_all(&dir)?;
    let view = TopDownView::new([0.0, 40.0], 40, 40, 1.0)?;
    let gt = square(view, 10, 10, 10);
    write_file(dir.join("plaza.png"), &gt.to_png()?)?;
    let view_json = serde_json::to_string(&view)?;
    let lines = [
        format!(r#"{{"scene": "demo", "task": "GRD", "query": "The plaza", "gt_mask": "plaza.png", "view": {view_json}}}"#),
        r#"{"scene": "demo", "task": "CNT", "query": "How many cars?", "answer": 12}"#.to_string(),
        r#"{"scene": "demo", "task": "SPR", "query": "Is there a tree north of the plaza?", "answer": "Yes"}"#.to_string(),
        r#"{"scene": "demo", "task": "CNT", "query": "How many towers?", "answer": 4}"#.to_string(),
    ];
    std::fs::write(dir.join("tasks.jsonl"), lines.join("\n"))?;
    let records = load_dataset(dir.join("tasks.jsonl"))?;

    let shifted = square(view, 15, 15, 10);
    println!("IoU of a half-shifted square: {:.4}", compute_iou(Some(&shifted), &gt)?);

    let predictions = [Value::Segment(shifted), Value::Number(11.0), Value::Text("yes".into()), Value::None];
    for policy in [NonePolicy::Penalize, NonePolicy::Skip] {
        let opts = ScoreOptions { none_policy: policy, ..ScoreOptions::default() };
        let rows = records.iter().zip(&predictions).enumerate().map(|(i, (r, p))| {
            let mut row = score_task(r, p, &opts);
            row.index = i;
            row
        });
        let report = MetricsReport::from_rows(rows.collect(), &opts, 0);
        println!("{policy:?}: None {}/{}", report.none_count, report.total);
        for (task, m) in &report.tasks {
            println!("  {:<4} loc {:?}  mIoU {:?}  MAE {:?}  EM {:?}", task.code(), m.localization_accuracy, m.mean_iou, m.mae, m.exact_match);
        }
    }
    Ok(())
}
