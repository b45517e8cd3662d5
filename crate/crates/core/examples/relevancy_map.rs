//! Bake class embeddings into a synthetic scene, then query the rendered
//! feature raster with free text and threshold the result into masks.
//!
//!     cargo run --release --example relevancy_map [query ...]

use geoprog::field::{bake_features, relevancy_map, threshold_segment, LatentCodec};
use geoprog::providers::{OracleEmbedder, ORACLE_DIM};
use geoprog::render::{render_topdown, TopDownView};
use geoprog::segment::Segment;
use geoprog::scene::synth::{synth_city, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut queries: Vec<String> = std::env::args().skip(1).collect();
    if queries.is_empty() {
        queries = ["car", "Billboards", "a tall tower", "grass"].map(String::from).to_vec();
    }

    let (raw, truth) = synth_city(7, &SynthSpec::default())?;
    let embedder = OracleEmbedder::synth_classes();
    let codec = LatentCodec::identity(ORACLE_DIM);
    let tree = bake_features(&raw, &truth.labels, &embedder, &codec)?;
    let view = TopDownView::covering(&tree, 1.0, 0.0)?;
    let render = render_topdown(&tree, &view)?;
    let out = std::env::temp_dir().join("geoprog_relevancy");
    std::fs::create_dir_all(&out)?;

    for q in &queries {
        let map = relevancy_map(&render, q, &embedder, &codec)?;
        let Some((lo, hi)) = map.min_max() else {
            println!("{q:>14}: no pixels");
            continue;
        };
        let seg = threshold_segment(&map, None, 0.5)?;
        let path = out.join(format!("{}.png", q.replace(' ', "_")));
        map.export(&path)?;
        println!("{q:>14}: raw [{lo:.3}, {hi:.3}]  {:>6} px  {:?}  -> {}", seg.count(), seg.provenance.flags, path.display());
    }

    // restricting to an area renormalizes inside it, so a quadrant with few
    // cars still yields a mask
    let quadrant = (0..view.pixel_count()).map(|i| i / view.width < view.height / 2 && i % view.width >= view.width / 2).collect();
    let ne = Segment::new(view, quadrant, "quadrant");
    let map = relevancy_map(&render, "car", &embedder, &codec)?;
    for tau in [0.3, 0.5, 0.8] {
        println!("car in NE quadrant at tau {tau}: {} px", threshold_segment(&map, Some(&ne), tau)?.count());
    }
    Ok(())
}
