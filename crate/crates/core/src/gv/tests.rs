use super::*;
use crate::providers::{OracleDetector, OracleEmbedder};
use crate::registry::Landmark;
use crate::scene::GaussianPrimitive;
use proptest::prelude::*;

const N: usize = 60;

/// Flat unit-spaced sheet covering `[x0, x1) x [y0, y1)` at height `z`.
fn sheet(x0: f32, y0: f32, x1: f32, y1: f32, z: f32, color: [f32; 3]) -> Vec<GaussianPrimitive> {
    let mut out = Vec::new();
    let mut y = y0 + 0.5;
    while y < y1 {
        let mut x = x0 + 0.5;
        while x < x1 {
            out.push(GaussianPrimitive::axis_aligned([x, y, z], [0.5, 0.5, 0.05], 0.98, color, 16));
            x += 1.0;
        }
        y += 1.0;
    }
    out
}

fn flat_scene(parts: Vec<Vec<GaussianPrimitive>>) -> SceneTree {
    let nodes: Vec<GaussianPrimitive> = parts.into_iter().flatten().collect();
    let n = nodes.len();
    SceneTree::build(16, nodes, vec![None; n], vec![0; n]).unwrap()
}

fn view() -> TopDownView {
    TopDownView::new([0.0, N as f64], N, N, 1.0).unwrap()
}

fn square(name: &str, x: f64, y: f64, s: f64) -> Landmark {
    Landmark { name: name.into(), aliases: vec![], tags: vec![], rings: vec![vec![[x, y], [x + s, y], [x + s, y + s], [x, y + s]]] }
}

fn ctx_with(scene: SceneTree, transform: GeoTransform) -> GeoContext {
    let mut reg = Registry::default();
    reg.insert(Landmark { aliases: vec!["Building A".into()], ..square("The View", 20.0, 20.0, 10.0) }).unwrap();
    reg.insert(square("Quik Park", 40.0, 40.0, 6.0)).unwrap();
    GeoContext::new(
        Arc::new(scene),
        Arc::new(reg),
        transform,
        view(),
        Arc::new(OracleEmbedder::synth_classes()),
        Arc::new(OracleDetector::default()),
    )
}

fn ctx() -> GeoContext {
    let ground = sheet(0.0, 0.0, N as f32, N as f32, 0.0, [0.45; 3]);
    let roof = sheet(20.0, 20.0, 30.0, 30.0, 30.0, [0.8, 0.72, 0.55]);
    ctx_with(flat_scene(vec![ground, roof]), GeoTransform::identity())
}

fn seg_from(f: impl Fn(usize, usize) -> bool) -> Segment {
    let mask = (0..N * N).map(|i| f(i / N, i % N)).collect();
    Segment::new(view(), mask, "test")
}

fn disc(cr: f64, cc: f64, r: f64) -> Segment {
    seg_from(|row, col| (row as f64 + 0.5 - cr).powi(2) + (col as f64 + 0.5 - cc).powi(2) <= r * r)
}

#[test]
fn landmark_and_alias_give_same_mask() {
    let c = ctx();
    let a = c.get_landmark_seg("The View").unwrap();
    let b = c.get_landmark_seg("building a").unwrap();
    assert_eq!(a.mask, b.mask);
    assert_eq!(a.count(), 100);
    assert!(a.confidence.as_ref().unwrap().iter().zip(&a.mask).all(|(&v, &m)| (v == 1.0) == m));
    assert!(matches!(c.get_landmark_seg("Nowhere"), Err(GvError::Registry(RegistryError::LandmarkNotFound(_)))));
}

#[test]
fn annulus_area_and_flags() {
    let c = ctx();
    let d = disc(30.0, 30.0, 5.0);
    let ring = c.seg_around(&d, 10.0).unwrap();
    let expect = std::f64::consts::PI * (15.0f64.powi(2) - 5.0f64.powi(2));
    assert!((ring.count() as f64 - expect).abs() / expect < 0.05);
    assert!(ring.mask.iter().zip(&d.mask).all(|(&r, &m)| !(r && m)));
    let tiny = c.seg_around(&d, 0.5).unwrap();
    assert!(tiny.is_empty() && tiny.has_flag(SegmentFlag::EmptyRing));
    assert!(matches!(c.seg_around(&d, 0.0), Err(GvError::NonPositiveDistance(_))));
}

#[test]
fn direction_half_planes() {
    let c = ctx();
    let s = seg_from(|r, col| (28..32).contains(&r) && (28..32).contains(&col));
    let n = c.seg_direction(&s, Compass::N).unwrap();
    assert_eq!(n.count(), 28 * N);
    assert!(n.get(27, 0) && !n.get(28, 0));
    let e = c.seg_direction(&s, Compass::E).unwrap();
    let ne = c.seg_direction(&s, Compass::NE).unwrap();
    let both: Vec<bool> = n.mask.iter().zip(&e.mask).map(|(&a, &b)| a && b).collect();
    assert_eq!(ne.mask, both);
    assert_eq!("north-east".parse::<Compass>().unwrap(), Compass::NE);
    assert_eq!("West".parse::<Compass>().unwrap(), Compass::W);
    assert!("up".parse::<Compass>().is_err());
}

#[test]
fn rotated_view_is_rejected_for_directions() {
    let ground = sheet(0.0, 0.0, N as f32, N as f32, 0.0, [0.45; 3]);
    let c = ctx_with(flat_scene(vec![ground]), GeoTransform::from_similarity(1.0, 0.3, [0.0, 0.0]));
    let s = disc(30.0, 30.0, 3.0);
    assert!(matches!(c.seg_direction(&s, Compass::N), Err(GvError::ViewNotNorthAligned(_))));
}

#[test]
fn between_two_squares() {
    let c = ctx();
    let a = seg_from(|r, col| (10..14).contains(&r) && (10..14).contains(&col));
    let b = seg_from(|r, col| (10..14).contains(&r) && (24..28).contains(&col));
    let m = c.seg_between(&a, &b).unwrap();
    assert_eq!(m.count(), 4 * 10);
    assert!(m.get(10, 14) && m.get(13, 23) && !m.get(14, 20));
    assert_eq!(c.seg_between(&b, &a).unwrap().mask, m.mask);

    let touching = seg_from(|r, col| (10..14).contains(&r) && (14..18).contains(&col));
    assert!(c.seg_between(&a, &touching).unwrap().is_empty());
}

#[test]
fn largest_keeps_main_blob() {
    let c = ctx();
    let s = seg_from(|r, col| ((5..10).contains(&r) && (5..15).contains(&col)) || (r == 40 && col == 40) || (r == 50 && (50..53).contains(&col)));
    let l = c.largest_seg(&s).unwrap();
    assert_eq!(l.count(), 50);
    assert_eq!(c.largest_seg(&l).unwrap().mask, l.mask);
}

#[test]
fn distance_three_four_five() {
    let c = ctx();
    // single pixels with centres (10.5, 49.5) and (40.5, 9.5): dx 30, dy 40
    let a = seg_from(|r, col| r == 10 && col == 10);
    let b = seg_from(|r, col| r == 50 && col == 40);
    assert!((c.measure_dist(&a, &b).unwrap() - 50.0).abs() < 1e-9);
    assert_eq!(c.measure_dist(&a, &a).unwrap(), 0.0);
    assert_eq!(c.measure_dist(&a, &b).unwrap(), c.measure_dist(&b, &a).unwrap());

    let ground = sheet(0.0, 0.0, N as f32, N as f32, 0.0, [0.45; 3]);
    let c2 = ctx_with(flat_scene(vec![ground]), GeoTransform::from_similarity(2.0, 0.0, [7.0, -3.0]));
    assert!((c2.measure_dist(&a, &b).unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn boundary_distance_mode() {
    let mut c = ctx();
    c.config.dist_mode = DistMode::Boundary;
    let a = seg_from(|r, col| r == 10 && (10..20).contains(&col));
    let b = seg_from(|r, col| r == 15 && (10..20).contains(&col));
    assert_eq!(c.measure_dist(&a, &b).unwrap(), 5.0);
}

#[test]
fn height_of_roof_and_bare_ground() {
    let c = ctx();
    let roof = c.get_landmark_seg("The View").unwrap();
    assert!((c.measure_height(&roof).unwrap() - 30.0).abs() <= 0.5);
    let bare = c.get_landmark_seg("Quik Park").unwrap();
    assert!(c.measure_height(&bare).unwrap().abs() <= 0.5);
}

#[test]
fn two_tier_roof_reads_dominant_top() {
    let ground = sheet(0.0, 0.0, N as f32, N as f32, 0.0, [0.45; 3]);
    // 30 m tier covers 80 of 100 pixels
    let low = sheet(20.0, 20.0, 22.0, 30.0, 10.0, [0.8, 0.72, 0.55]);
    let high = sheet(22.0, 20.0, 30.0, 30.0, 30.0, [0.8, 0.72, 0.55]);
    let c = ctx_with(flat_scene(vec![ground, low, high]), GeoTransform::identity());
    let h = c.measure_height(&c.get_landmark_seg("The View").unwrap()).unwrap();
    assert!((h - 30.0).abs() <= 1.0, "{h}");
}

#[test]
fn upright_gaussians_are_not_flat() {
    let trunk: Vec<GaussianPrimitive> = (0..10).map(|i| GaussianPrimitive::axis_aligned([45.0 + i as f32 * 0.1, 15.0, 3.0], [0.5, 0.6, 2.0], 0.9, [0.2; 3], 16)).collect();
    let c = ctx_with(flat_scene(vec![trunk]), GeoTransform::identity());
    let area = seg_from(|r, col| (40..50).contains(&r) && (40..50).contains(&col));
    assert!(matches!(c.measure_height(&area), Err(GvError::NoFlatGaussians)));
}

#[test]
fn detector_boxes_map_to_view_and_respect_area() {
    let ground = sheet(0.0, 0.0, N as f32, N as f32, 0.0, [0.45; 3]);
    let car1 = sheet(5.0, 5.0, 9.0, 7.0, 1.5, [0.85, 0.1, 0.1]);
    let car2 = sheet(45.0, 50.0, 47.0, 55.0, 1.5, [0.85, 0.1, 0.1]);
    let c = ctx_with(flat_scene(vec![ground, car1, car2]), GeoTransform::identity());
    let all = c.get_object_seg("car", None).unwrap();
    assert_eq!(all.len(), 2);
    for b in &all.boxes {
        assert!(b[0] < b[2] && b[1] < b[3] && b[0] >= 0.0 && b[3] <= N as f64);
    }
    // car1 occupies scene x 5..9, y 5..7 -> cols 5..9, rows 53..55
    assert!(all.boxes.iter().any(|b| (b[0] - 5.0).abs() < 1.01 && (b[1] - 53.0).abs() < 1.01));

    let north = seg_from(|r, _| r < 30);
    let some = c.get_object_seg("car", Some(&north)).unwrap();
    assert_eq!(some.len(), 1);
    let none = c.get_object_seg("car", Some(&seg_from(|r, col| r < 3 && col < 3))).unwrap();
    assert!(none.is_empty());
}

#[test]
fn structure_seg_finds_the_roof() {
    let ground = sheet(0.0, 0.0, N as f32, N as f32, 0.0, [0.45; 3]);
    let roof = sheet(20.0, 20.0, 30.0, 30.0, 30.0, [0.8, 0.72, 0.55]);
    let labels: Vec<String> = ground.iter().map(|_| "ground").chain(roof.iter().map(|_| "building")).map(String::from).collect();
    let raw = flat_scene(vec![ground, roof]);
    let baked = crate::field::bake_features(&raw, &labels, &OracleEmbedder::synth_classes(), &LatentCodec::identity(16)).unwrap();
    let c = ctx_with(baked, GeoTransform::identity());
    let s = c.get_structure_seg("building", None).unwrap();
    let truth = c.get_landmark_seg("The View").unwrap();
    let inter = s.mask.iter().zip(&truth.mask).filter(|(&a, &b)| a && b).count();
    let union = s.mask.iter().zip(&truth.mask).filter(|(&a, &b)| a || b).count();
    assert!(inter as f64 / union as f64 >= 0.9, "{inter} / {union}");
    let odd = c.get_structure_seg("submarine", None).unwrap();
    assert!(odd.has_flag(SegmentFlag::LowConfidence));
}

#[test]
fn grid_mismatch_and_empty_inputs() {
    let c = ctx();
    let other = Segment::whole(TopDownView::new([0.0, 10.0], 10, 10, 1.0).unwrap());
    assert!(matches!(c.largest_seg(&other), Err(GvError::GridMismatch)));
    let empty = seg_from(|_, _| false);
    assert!(matches!(c.largest_seg(&empty), Err(GvError::EmptyInput)));
    assert!(matches!(c.get_structure_seg("car", Some(&empty)), Err(GvError::EmptyArea)));
}

#[test]
fn percentile_interpolates() {
    let mut v = vec![4.0, 1.0, 3.0, 2.0, 5.0];
    assert_eq!(percentile(&mut v, 50.0), 3.0);
    assert_eq!(percentile(&mut v, 0.0), 1.0);
    assert_eq!(percentile(&mut v, 100.0), 5.0);
    assert_eq!(percentile(&mut v, 25.0), 2.0);
}

fn random_mask() -> impl Strategy<Value = Vec<bool>> {
    proptest::collection::vec(proptest::bool::weighted(0.01), N * N).prop_filter("non-empty", |m| m.iter().any(|&b| b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn directions_are_disjoint_and_exclude_input(m in random_mask()) {
        let c = ctx();
        let s = Segment::new(view(), m, "p");
        let get = |d| c.seg_direction(&s, d).unwrap();
        let (n, so, e, w) = (get(Compass::N), get(Compass::S), get(Compass::E), get(Compass::W));
        for i in 0..N * N {
            prop_assert!(!(n.mask[i] && so.mask[i]));
            prop_assert!(!(e.mask[i] && w.mask[i]));
        }
        for d in Compass::ALL {
            let r = get(d);
            prop_assert!(r.mask.iter().zip(&s.mask).all(|(&a, &b)| !(a && b)));
        }
    }

    #[test]
    fn buffers_nest(m in random_mask(), d1 in 1.0f64..8.0, extra in 0.1f64..8.0) {
        let c = ctx();
        let s = Segment::new(view(), m, "p");
        let a = c.seg_around(&s, d1).unwrap();
        let b = c.seg_around(&s, d1 + extra).unwrap();
        for i in 0..N * N {
            prop_assert!(!(s.mask[i] || a.mask[i]) || (s.mask[i] || b.mask[i]));
        }
    }

    #[test]
    fn between_is_symmetric(a in random_mask(), b in random_mask()) {
        let c = ctx();
        let (a, b) = (Segment::new(view(), a, "a"), Segment::new(view(), b, "b"));
        prop_assert_eq!(c.seg_between(&a, &b).unwrap().mask, c.seg_between(&b, &a).unwrap().mask);
    }
}
