//! Call the geospatial vision operations directly on a synthetic city: look
//! up a landmark, build a ring and a directional sector around it, find cars
//! inside, and measure distances and heights.
//!
//!     cargo run --release --example gv_ops

use geoprog::eval::suite::SynthSuite;
use geoprog::gv::Compass;
use geoprog::scene::synth::SynthSpec;
use geoprog::segment::Segment;

fn describe(label: &str, s: &Segment) {
    let c = s.centroid_scene().map_or("-".into(), |c| format!("({:.1}, {:.1})", c[0], c[1]));
    println!("{label:<28} {:>6} px  centre {c}  {:?}", s.count(), s.provenance.flags);
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let suite = SynthSuite::generate(7, &SynthSpec::default())?;
    let ctx = suite.oracle_catalog().context(&suite.scene_id, None)?;
    let names: Vec<&str> = ctx.registry.landmarks().iter().map(|l| l.name.as_str()).collect();
    println!("landmarks: {}", names.join(", "));

    let a = ctx.get_landmark_seg(names[0])?;
    let b = ctx.get_landmark_seg(names[1])?;
    describe(names[0], &a);
    describe(names[1], &b);

    let ring = ctx.seg_around(&a, 40.0)?;
    describe("within 40 m", &ring);
    let cars = ctx.get_structure_seg("car", Some(&ring))?;
    describe("cars within 40 m", &cars);
    describe("largest of those", &ctx.largest_seg(&cars)?);

    let north: Compass = "north-west".parse()?;
    let sector = ctx.seg_direction(&a, north)?;
    describe("north-west sector", &sector);
    describe("between the two", &ctx.seg_between(&a, &b)?);

    let boxes = ctx.get_object_seg("car", None)?;
    println!("detector found {} cars in the whole view", boxes.len());

    println!("distance {} to {}: {:.1} m", names[0], names[1], ctx.measure_dist(&a, &b)?);
    println!("height of {}: {:.1} m", names[0], ctx.measure_height(&a)?);

    match ctx.get_landmark_seg("Atlantis Tower") {
        Ok(_) => println!("unexpected hit"),
        Err(e) => println!("unknown landmark: {e}"),
    }
    Ok(())
}
