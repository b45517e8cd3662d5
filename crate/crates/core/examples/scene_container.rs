//! Save a scene tree to the binary container, read it back, and show what
//! validation reports for a deliberately corrupted copy.
//!
//!     cargo run --example scene_container

use geoprog::scene::synth::{synth_city, SynthSpec};
use geoprog::scene::{load_scene, read_scene, save_scene, validate_tree, write_scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { extent_m: 160.0, buildings: 4, towers: 1, billboards: 2, trees: 3, cars: 5, ..SynthSpec::default() };
    let (tree, truth) = synth_city(11, &spec)?;

    let dir = std::env::temp_dir().join("geoprog_container");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("city.scene");
    save_scene(&tree, &path)?;
    let loaded = load_scene(&path)?;
    println!(
        "{}: {} bytes, {} nodes, latent dim {}, transform {}",
        path.display(),
        std::fs::metadata(&path)?.len(),
        loaded.len(),
        loaded.header.latent_dim,
        if loaded.transform() == Some(&truth.transform) { "embedded" } else { "missing" }
    );
    assert_eq!(loaded, tree);

    let mut broken = tree.clone();
    broken.nodes[3].opacity = 1.7;
    broken.nodes[5].scale[1] = -0.2;
    for v in validate_tree(&broken) {
        println!("  {v}");
    }

    // the reader validates, so the corrupted copy round-trips to an error
    let mut bytes = Vec::new();
    write_scene(&broken, &mut bytes)?;
    println!("read broken: {}", read_scene(bytes.as_slice()).map_or_else(|e| e.to_string(), |_| "ok".into()));
    bytes.clear();
    write_scene(&tree, &mut bytes)?;
    bytes.truncate(bytes.len() / 2);
    println!("read truncated: {}", read_scene(bytes.as_slice()).map_or_else(|e| e.to_string(), |_| "ok".into()));
    Ok(())
}

