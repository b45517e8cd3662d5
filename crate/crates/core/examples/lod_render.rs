//! Render a synthetic city top-down at several resolutions and show how the
//! level-of-detail cut shrinks as pixels get coarser. The finest render is
//! exported as PNG plus raw f32 rasters.
//!
//!     cargo run --release --example lod_render [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use geoprog::render::{render_topdown, select_lod_cut, TopDownView};
use geoprog::scene::synth::{synth_city, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("geoprog_render"), PathBuf::from);
    let (tree, _) = synth_city(7, &SynthSpec::default())?;
    println!("{} nodes, {} leaves, depth {}", tree.len(), tree.leaf_count(), tree.depth());

    for res in [8.0, 4.0, 2.0, 1.0] {
        let view = TopDownView::covering(&tree, res, 0.0)?;
        let cut = select_lod_cut(&tree, &view);
        let start = Instant::now();
        let product = render_topdown(&tree, &view)?;
        let covered = product.alpha.iter().filter(|&&a| a > 0.5).count() as f64 / view.pixel_count() as f64;
        println!(
            "{res:>4} m/px  {:>4}x{:<4} cut {:>6} nodes  splatted {:>6}  covered {:>5.1}%  {:.0?}",
            view.width,
            view.height,
            cut.len(),
            product.stats.splatted,
            100.0 * covered,
            start.elapsed()
        );
        if res == 1.0 {
            product.export(&out)?;
        }
    }
    println!("rgb.png, alpha.png, feature.f32 and height.f32 written to {}", out.display());
    Ok(())
}
