//! Load landmarks from GeoJSON, resolve names and aliases, and rasterize a
//! polygon with a hole onto a top-down grid.
//!
//!     cargo run --example landmark_registry [file.geojson]

use geoprog::georef::GeoTransform;
use geoprog::registry::{rasterize_polygon, Registry};
use geoprog::render::TopDownView;

const SAMPLE: &str = r#"{
  "type": "FeatureCollection",
  "features": [
    {
      "type": "Feature",
      "properties": { "name": "Harbor Plaza", "aliases": ["the plaza", "HP"], "tags": ["square"] },
      "geometry": { "type": "Polygon", "coordinates": [
        [[1010, 2010], [1070, 2010], [1070, 2060], [1010, 2060], [1010, 2010]],
        [[1030, 2025], [1050, 2025], [1050, 2045], [1030, 2045], [1030, 2025]]
      ] }
    },
    {
      "type": "Feature",
      "properties": { "name": "St. Mary's Hall" },
      "geometry": { "type": "Polygon", "coordinates": [
        [[1100, 2080], [1120, 2080], [1110, 2100], [1100, 2080]]
      ] }
    }
  ]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = match std::env::args().nth(1) {
        Some(path) => Registry::load(path)?,
        None => Registry::from_geojson(SAMPLE)?,
    };
    println!("{} landmarks", registry.len());

    for q in ["harbor plaza", "  The Plaza ", "hp", "st marys hall", "Harbour Plaza"] {
        match registry.lookup_landmark(q) {
            Ok(lm) => println!("{q:>16} -> {}", lm.name),
            Err(e) => println!("{q:>16} -> {e}"),
        }
    }

    // scene frame offset from the world by (1000, 2000), 1 m per unit
    let transform = GeoTransform::from_similarity(1.0, 0.0, [1000.0, 2000.0]);
    let view = TopDownView::new([0.0, 120.0], 120, 120, 1.0)?;
    for lm in registry.landmarks() {
        let seg = rasterize_polygon(lm, &view, &transform);
        let bb = seg.bbox();
        println!("{:<16} {:>5} px  bbox {:?}  {:?}", lm.name, seg.count(), bb, seg.provenance.flags);
    }

    let far = TopDownView::new([500.0, 620.0], 50, 50, 1.0)?;
    let lm = registry.lookup_landmark("HP")?;
    println!("outside the view: {:?}", rasterize_polygon(lm, &far, &transform).provenance.flags);
    Ok(())
}
