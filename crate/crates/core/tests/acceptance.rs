//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any of them fails.

use std::collections::{BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use geoprog::eval::suite::SynthSuite;
use geoprog::eval::{compute_iou, ice_sweep, load_dataset, run_benchmark, score_task, Engine, Expected, MetricsReport, ScoreOptions, Task, TaskRecord};
use geoprog::georef::{estimate_transform, ControlPoint, ControlPointSet, GeoTransform, TransformKind};
use geoprog::gv::{Compass, GeoContext};
use geoprog::imageio;
use geoprog::program::{execute_program, parse_program, ApiRegistry, CheckedProgram, ExecOptions, Kind, Value};
use geoprog::providers::{FailurePlan, OracleDetector, OracleEmbedder};
use geoprog::registry::{Landmark, Registry};
use geoprog::render::{projected_diameter_px, select_lod_cut, TopDownView};
use geoprog::scene::synth::{synth_city, SynthSpec, CLASS_BUILDING};
use geoprog::scene::{GaussianPrimitive, SceneTree};
use geoprog::segment::Segment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Fixture {
    suite: SynthSuite,
    records: Vec<TaskRecord>,
    _dir: tempfile::TempDir,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let suite = SynthSuite::generate(7, &SynthSpec::default()).expect("suite");
        let dir = tempfile::tempdir().expect("tempdir");
        let dataset = suite.write(dir.path()).expect("write suite");
        let records = load_dataset(&dataset).expect("dataset loads");
        Fixture { suite, records, _dir: dir }
    })
}

fn engine(f: &Fixture, jobs: usize) -> Engine {
    let mut e = Engine::new(Arc::new(f.suite.oracle_catalog()), Arc::new(f.suite.stub_generator()));
    e.jobs = jobs;
    e
}

// ---------------------------------------------------------------- 1

fn georeferencing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_rel = 0.0f64;
    let mut worst_rt = 0.0f64;
    let mut slowest = Duration::ZERO;
    for _ in 0..20 {
        let scale = rng.random_range(0.05..20.0);
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let t = [rng.random_range(-1e5..1e5), rng.random_range(-1e5..1e5)];
        let truth = GeoTransform::from_similarity(scale, theta, t);
        let pairs: Vec<ControlPoint> = (0..25)
            .map(|_| {
                let s = [rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)];
                ControlPoint { scene: s, world: truth.to_world(s) }
            })
            .collect();
        let diameter = pairs
            .iter()
            .flat_map(|a| pairs.iter().map(move |b| ((a.world[0] - b.world[0]).powi(2) + (a.world[1] - b.world[1]).powi(2)).sqrt()))
            .fold(0.0, f64::max);
        let start = Instant::now();
        let fit = estimate_transform(&ControlPointSet::new(pairs.clone()), TransformKind::Similarity).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        worst_rel = worst_rel.max(fit.residual_rmse / diameter);
        ensure!((fit.scale() - scale).abs() <= 1e-9 * scale, "scale {} vs {scale}", fit.scale());
        let dtheta = (fit.rotation() - theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        ensure!(dtheta.abs() < 1e-9, "rotation off by {dtheta}");
        for p in &pairs {
            let back = fit.to_scene(fit.to_world(p.scene));
            let err = ((back[0] - p.scene[0]).powi(2) + (back[1] - p.scene[1]).powi(2)).sqrt();
            worst_rt = worst_rt.max(err);
        }
    }
    ensure!(worst_rel < 1e-9, "rmse/diameter {worst_rel:e}");
    ensure!(worst_rt < 1e-9, "round trip {worst_rt:e}");
    ensure!(slowest < Duration::from_secs(1), "fit took {slowest:?}");
    Ok(format!("20 transforms, n=25, max rmse/diameter {worst_rel:.1e}, round trip {worst_rt:.1e}, slowest fit {slowest:.1?}"))
}

// ---------------------------------------------------------------- 2

fn ancestors(tree: &SceneTree, mut i: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while let Some(p) = tree.parent[i] {
        out.push(p as usize);
        i = p as usize;
    }
    out
}

/// Antichain, leaf coverage and the one-pixel rule, all checked from the definition.
fn check_cut(tree: &SceneTree, view: &TopDownView, cut: &[usize]) -> Result<(), String> {
    let set: BTreeSet<usize> = cut.iter().copied().collect();
    ensure!(set.len() == cut.len(), "duplicate nodes in cut");
    for &c in cut {
        ensure!(ancestors(tree, c).iter().all(|a| !set.contains(a)), "node {c} has an ancestor in the cut");
        ensure!(tree.is_leaf(c) || projected_diameter_px(tree, c, view) <= 1.0, "node {c} exceeds one pixel");
        ensure!(ancestors(tree, c).iter().all(|&a| projected_diameter_px(tree, a, view) > 1.0), "node {c} has a coarser valid ancestor");
    }
    for leaf in tree.leaves() {
        let covered = std::iter::once(leaf).chain(ancestors(tree, leaf)).filter(|n| set.contains(n)).count();
        ensure!(covered == 1, "leaf {leaf} covered {covered} times");
    }
    Ok(())
}

fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> SceneTree {
    let mut parent = vec![None];
    let mut level = vec![0u16];
    let mut nodes = Vec::new();
    for i in 0..n {
        if i > 0 {
            let p = if rng.random_bool(0.9) { Some(rng.random_range(0..i) as u32) } else { None };
            level.push(p.map_or(0, |p| level[p as usize] + 1));
            parent.push(p);
        }
        let s = rng.random_range(0.05..3.0f32);
        let pos = [rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), 0.0];
        nodes.push(GaussianPrimitive::axis_aligned(pos, [s, s * rng.random_range(0.2..1.0f32), 0.1], 0.9, [0.5; 3], 4));
    }
    SceneTree::build(4, nodes, parent, level).expect("valid random tree")
}

/// Exhaustive oracle: the valid leaf-covering antichain with the least total depth.
fn exhaustive_cut(tree: &SceneTree, view: &TopDownView) -> Vec<usize> {
    let n = tree.len();
    let valid: Vec<bool> = (0..n).map(|i| tree.is_leaf(i) || projected_diameter_px(tree, i, view) <= 1.0).collect();
    let paths: Vec<Vec<usize>> = tree.leaves().map(|l| std::iter::once(l).chain(ancestors(tree, l)).collect()).collect();
    let mut best: Option<(usize, Vec<usize>)> = None;
    for bits in 0u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
        if members.iter().any(|&i| !valid[i]) {
            continue;
        }
        if !paths.iter().all(|p| p.iter().filter(|&&x| bits >> x & 1 == 1).count() == 1) {
            continue;
        }
        let depth: usize = members.iter().map(|&i| tree.level[i] as usize).sum();
        if best.as_ref().is_none_or(|(d, _)| depth < *d) {
            best = Some((depth, members));
        }
    }
    best.expect("leaves always form a valid cut").1
}

/// Path oracle: each leaf contributes the first valid node on its root path.
fn path_cut(tree: &SceneTree, view: &TopDownView) -> Vec<usize> {
    let mut out = BTreeSet::new();
    for leaf in tree.leaves() {
        let mut path: Vec<usize> = std::iter::once(leaf).chain(ancestors(tree, leaf)).collect();
        path.reverse();
        let first = path.into_iter().find(|&i| tree.is_leaf(i) || projected_diameter_px(tree, i, view) <= 1.0).unwrap();
        out.insert(first);
    }
    out.into_iter().collect()
}

fn lod_correctness() -> Outcome {
    let (tree, _) = synth_city(7, &SynthSpec::default()).map_err(|e| e.to_string())?;
    let leaves = tree.leaf_count();
    ensure!(tree.depth() == 3, "synthetic tree has {} levels", tree.depth());
    ensure!(leaves >= 10_000, "only {leaves} leaves");
    let mut at10 = 0;
    for res in [0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 100.0] {
        let view = TopDownView::covering(&tree, res, 0.0).map_err(|e| e.to_string())?;
        let cut = select_lod_cut(&tree, &view);
        check_cut(&tree, &view, &cut).map_err(|e| format!("res {res}: {e}"))?;
        if res == 10.0 {
            at10 = cut.len();
        }
    }
    ensure!((at10 as f64) < 0.5 * leaves as f64, "cut at 10 u/px has {at10} of {leaves} leaves");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..300 {
        let n = if trial < 100 { rng.random_range(1..=14) } else { rng.random_range(15..=200) };
        let tree = random_tree(&mut rng, n);
        let res = rng.random_range(0.1..6.0);
        let view = TopDownView::new([0.0, 50.0], 50, 50, res).map_err(|e| e.to_string())?;
        let cut = select_lod_cut(&tree, &view);
        check_cut(&tree, &view, &cut).map_err(|e| format!("random tree {trial}: {e}"))?;
        let oracle = if n <= 14 { exhaustive_cut(&tree, &view) } else { path_cut(&tree, &view) };
        ensure!(cut == oracle, "random tree {trial} ({n} nodes): cut {cut:?} vs oracle {oracle:?}");
    }
    Ok(format!("{leaves} leaves, cut at 10 u/px = {at10} ({:.2}%), 300 random trees agree with brute force", 100.0 * at10 as f64 / leaves as f64))
}

// ---------------------------------------------------------------- 3

fn flat_context(side: usize, res: f64, registry: Registry) -> GeoContext {
    let ground = GaussianPrimitive::axis_aligned([side as f32 * res as f32 / 2.0, side as f32 * res as f32 / 2.0, 0.0], [1.0, 1.0, 0.05], 0.9, [0.45; 3], 16);
    let tree = SceneTree::build(16, vec![ground], vec![None], vec![0]).unwrap();
    let view = TopDownView::new([0.0, side as f64 * res], side, side, res).unwrap();
    GeoContext::new(
        Arc::new(tree),
        Arc::new(registry),
        GeoTransform::identity(),
        view,
        Arc::new(OracleEmbedder::synth_classes()),
        Arc::new(OracleDetector::default()),
    )
}

fn seg_with(view: TopDownView, mut f: impl FnMut(usize, usize) -> bool) -> Segment {
    let mask = (0..view.width * view.height).map(|i| f(i / view.width, i % view.width)).collect();
    Segment::new(view, mask, "test")
}

fn random_blobs(rng: &mut ChaCha8Rng, view: TopDownView) -> Segment {
    let shapes: Vec<(f64, f64, f64, bool)> = (0..rng.random_range(1..4))
        .map(|_| (rng.random_range(0.0..view.height as f64), rng.random_range(0.0..view.width as f64), rng.random_range(1.0..10.0), rng.random_bool(0.5)))
        .collect();
    let s = seg_with(view, |r, c| {
        shapes.iter().any(|&(cr, cc, rad, disc)| {
            let (dr, dc) = (r as f64 + 0.5 - cr, c as f64 + 0.5 - cc);
            if disc {
                dr * dr + dc * dc <= rad * rad
            } else {
                dr.abs() <= rad && dc.abs() <= rad * 0.6
            }
        })
    });
    if s.is_empty() {
        seg_with(view, |r, c| r == view.height / 2 && c == view.width / 2)
    } else {
        s
    }
}

/// Largest 8-connected component by BFS; ties keep the first found in row-major order.
fn flood_largest(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut seen = vec![false; mask.len()];
    let mut best: Vec<usize> = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = q.pop_front() {
            comp.push(i);
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let mut out = vec![false; mask.len()];
    for i in best {
        out[i] = true;
    }
    out
}

fn square(name: &str, x: f64, y: f64, s: f64) -> Landmark {
    Landmark { name: name.into(), aliases: vec![], tags: vec![], rings: vec![vec![[x, y], [x + s, y], [x + s, y + s], [x, y + s]]] }
}

fn gv_geometry() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();

    // annulus: 100 m ring around a 50 m disc at 1 m/px
    let c = flat_context(400, 1.0, Registry::default());
    let disc = seg_with(c.view, |r, col| (r as f64 + 0.5 - 200.0).powi(2) + (col as f64 + 0.5 - 200.0).powi(2) <= 50.0 * 50.0);
    let ring = c.seg_around(&disc, 100.0).map_err(|e| e.to_string())?;
    let expect = std::f64::consts::PI * (150.0f64.powi(2) - 50.0f64.powi(2));
    let rel = (ring.count() as f64 - expect).abs() / expect;
    ensure!(rel <= 0.02, "ring area {} vs {expect:.1} ({:.2}%)", ring.count(), rel * 100.0);
    notes.push(format!("ring {} m² ({:+.2}%)", ring.count(), 100.0 * (ring.count() as f64 - expect) / expect));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = flat_context(64, 1.0, Registry::default());
    for i in 0..100 {
        let s = random_blobs(&mut rng, c.view);
        let n = c.seg_direction(&s, Compass::N).map_err(|e| e.to_string())?;
        let so = c.seg_direction(&s, Compass::S).map_err(|e| e.to_string())?;
        ensure!(n.mask.iter().zip(&so.mask).all(|(&a, &b)| !(a && b)), "case {i}: north and south overlap");
        ensure!(n.mask.iter().chain(&so.mask).zip(s.mask.iter().chain(&s.mask)).all(|(&d, &m)| !(d && m)), "case {i}: direction includes the input");
    }
    for i in 0..100 {
        let a = random_blobs(&mut rng, c.view);
        let b = random_blobs(&mut rng, c.view);
        let ab = c.seg_between(&a, &b).map_err(|e| e.to_string())?;
        let ba = c.seg_between(&b, &a).map_err(|e| e.to_string())?;
        ensure!(ab.mask == ba.mask, "case {i}: between is not symmetric");
    }
    for i in 0..100 {
        let density = rng.random_range(0.2..0.6);
        let s = seg_with(c.view, |_, _| rng.random_bool(density));
        let l = c.largest_seg(&s).map_err(|e| e.to_string())?;
        ensure!(l.mask == flood_largest(&s.mask, 64, 64), "case {i}: largest component differs from flood fill");
    }
    notes.push("300 random direction/between/largest cases".into());

    // 3-4-5 placement at several resolutions and sub-pixel offsets
    let mut worst = 0.0f64;
    for res in [0.5, 1.0, 2.0] {
        for _ in 0..5 {
            let (x0, y0) = (rng.random_range(10.0..20.0), rng.random_range(10.0..20.0));
            let mut reg = Registry::default();
            reg.insert(square("A", x0, y0, 8.0)).unwrap();
            reg.insert(square("B", x0 + 30.0, y0 + 40.0, 8.0)).unwrap();
            let c = flat_context((100.0 / res) as usize, res, reg);
            let a = c.get_landmark_seg("A").map_err(|e| e.to_string())?;
            let b = c.get_landmark_seg("B").map_err(|e| e.to_string())?;
            let d = c.measure_dist(&a, &b).map_err(|e| e.to_string())?;
            ensure!((d - 50.0).abs() <= 2.0 * res, "res {res}: distance {d}");
            worst = worst.max((d - 50.0).abs() / res);
        }
    }
    notes.push(format!("3-4-5 worst error {worst:.3} px"));

    let f = fixture();
    let ctx = f.suite.oracle_catalog().context(&f.suite.scene_id, Some(&f.suite.view)).map_err(|e| e.to_string())?;
    let buildings: Vec<_> = f.suite.truth.objects_of(CLASS_BUILDING).collect();
    ensure!(buildings.len() == 20, "{} buildings", buildings.len());
    let mut within = 0;
    let mut worst_h = 0.0f64;
    for b in &buildings {
        let h = ctx.measure_height(&f.suite.object_mask(b.id)).map_err(|e| e.to_string())?;
        worst_h = worst_h.max((h - b.height).abs());
        within += usize::from((h - b.height).abs() <= 0.5);
    }
    ensure!(within == 20, "{within}/20 heights within 0.5 m (worst {worst_h:.3} m)");
    notes.push(format!("heights 20/20, worst {worst_h:.3} m"));

    let took = start.elapsed();
    ensure!(took < Duration::from_secs(60), "suite took {took:?}");
    notes.push(format!("{took:.1?}"));
    Ok(notes.join(", "))
}

// ---------------------------------------------------------------- 4

const FIG_GROUNDING: &str = "SEG0=GetLandmarkSeg(query='The View')\nSEG1=SegAround(area=SEG0,distance=100)\nANSWER=GetStructureSeg(query='Red-letter billboard',area=SEG1)";
const FIG_DIRECTION: &str = "SEG0=GetLandmarkSeg(query='Building A')\nSEG1=SegDirection(seg=SEG0,direction='north')\nSEG2=GetStructureSeg(query='car',area=SEG1)\nANSWER=LargestSeg(segs=SEG2)";

const WORDS: [&str; 12] = ["The View", "Building A", "car", "billboard", "tower", "Nowhere", "", "north", "south-west", "up", "tree", "Quik Park"];
const ARG_NAMES: [&str; 10] = ["query", "area", "seg", "segs", "distance", "direction", "seg1", "seg2", "a", "b"];

fn random_value(rng: &mut ChaCha8Rng, targets: &[(String, Kind)]) -> String {
    match rng.random_range(0..4) {
        0 if !targets.is_empty() => targets[rng.random_range(0..targets.len())].0.clone(),
        1 => format!("{}", rng.random_range(-1e4..1e4f64)),
        2 => format!("{}", rng.random_range(-5..600)),
        _ => format!("'{}'", WORDS[rng.random_range(0..WORDS.len())]),
    }
}

fn typed_value(rng: &mut ChaCha8Rng, kind: Kind, targets: &[(String, Kind)]) -> Option<String> {
    let from_targets: Vec<&String> = targets.iter().filter(|(_, k)| kind == Kind::Any || *k == kind || *k == Kind::Any).map(|(t, _)| t).collect();
    if !from_targets.is_empty() && (rng.random_bool(0.7) || !matches!(kind, Kind::Number | Kind::Text)) {
        return Some(from_targets[rng.random_range(0..from_targets.len())].clone());
    }
    Some(match kind {
        Kind::Number => ["0".to_string(), "-3".into(), "99999999999.5".into(), format!("{}", rng.random_range(-50.0..400.0f64))][rng.random_range(0..4)].clone(),
        Kind::Text => format!("'{}'", WORDS[rng.random_range(0..WORDS.len())]),
        _ => return None,
    })
}

/// Random program. Most are well-kinded calls fed hostile values (unknown
/// names, empty strings, zero or huge distances); the rest are noise.
fn fuzz_program(rng: &mut ChaCha8Rng, api: &ApiRegistry) -> String {
    let names: Vec<&str> = api.names().collect();
    let noisy = rng.random_bool(0.25);
    let n = rng.random_range(1..7);
    let mut targets: Vec<(String, Kind)> = Vec::new();
    let mut lines = Vec::new();
    for i in 0..n {
        let target = if i + 1 == n { "ANSWER".to_string() } else { format!("SEG{i}") };
        let mut line = None;
        for _ in 0..20 {
            if noisy {
                break;
            }
            let func = names[rng.random_range(0..names.len())];
            let sig = api.get(func).unwrap();
            let params: Vec<_> = sig.params.iter().filter(|p| p.required || rng.random_bool(0.5)).collect();
            let args: Option<Vec<String>> = params
                .iter()
                .map(|p| match p.name {
                    "direction" => Some(format!("direction='{}'", ["north", "S", "south-west", "East", "up"][rng.random_range(0..5)])),
                    _ => typed_value(rng, p.kind, &targets).map(|v| format!("{}={v}", p.name)),
                })
                .collect();
            if let Some(args) = args {
                line = Some((format!("{target}={func}({})", args.join(",")), sig.returns));
                break;
            }
        }
        let (text, kind) = line.unwrap_or_else(|| {
            let func = if rng.random_bool(0.1) { "Frobnicate" } else { names[rng.random_range(0..names.len())] };
            let args: Vec<String> = (0..rng.random_range(0..3)).map(|_| format!("{}={}", ARG_NAMES[rng.random_range(0..ARG_NAMES.len())], random_value(rng, &targets))).collect();
            let mut text = format!("{target}={func}({})", args.join(","));
            if rng.random_bool(0.1) {
                text.truncate(rng.random_range(0..text.len()));
            }
            (text, Kind::Any)
        });
        lines.push(text);
        targets.push((target, kind));
    }
    lines.join("\n")
}

fn program_engine() -> Outcome {
    let f = fixture();
    let api = ApiRegistry::standard();
    let ctx = f.suite.oracle_catalog().context(&f.suite.scene_id, Some(&f.suite.view)).map_err(|e| e.to_string())?;
    let opts = ExecOptions::default();
    for (text, targets) in [(FIG_GROUNDING, vec!["SEG0", "SEG1", "ANSWER"]), (FIG_DIRECTION, vec!["SEG0", "SEG1", "SEG2", "ANSWER"])] {
        let program = parse_program(text).map_err(|e| e.to_string())?;
        ensure!(program.statements.iter().map(|s| s.target.as_str()).eq(targets.iter().copied()), "targets of {text:?}");
        let checked = CheckedProgram::new(program, api).map_err(|r| format!("{r:?}"))?;
        let run = execute_program(&checked, &ctx, &opts);
        ensure!(matches!(run.value, Value::Segment(_)), "{text:?} gave {}", run.value.kind_name());
        ensure!(run.trace.failure().is_none(), "{text:?} failed: {:?}", run.trace.failure());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut parsed, mut executed, mut answered) = (0, 0, 0);
    for i in 0..1000 {
        let text = fuzz_program(&mut rng, api);
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let Ok(p) = parse_program(&text) else { return (false, None) };
            let Ok(checked) = CheckedProgram::new(p, api) else { return (true, None) };
            (true, Some(execute_program(&checked, &ctx, &opts)))
        }));
        let (ok_parse, run) = outcome.map_err(|_| format!("fuzz case {i} panicked:\n{text}"))?;
        parsed += usize::from(ok_parse);
        if let Some(run) = run {
            executed += 1;
            answered += usize::from(!run.value.is_none());
            ensure!(run.trace.statements.len() <= 6, "fuzz case {i}: trace too long");
        }
    }
    ensure!(executed >= 300, "only {executed} fuzz programs reached the executor");

    let a = run_benchmark(&f.records, &engine(f, 1)).to_json();
    let b = run_benchmark(&f.records, &engine(f, 1)).to_json();
    let c = run_benchmark(&f.records, &engine(f, 8)).to_json();
    ensure!(a == b, "two runs differ");
    ensure!(a == c, "1 and 8 workers differ");
    Ok(format!("figure programs ok, fuzz: {parsed} parsed, {executed} executed ({answered} non-None), no panics; reports identical across runs and 1/8 workers"))
}

// ---------------------------------------------------------------- 5

fn metric(r: &MetricsReport, t: Task, pick: fn(&geoprog::eval::TaskMetrics) -> Option<f64>) -> Result<f64, String> {
    r.task(t).and_then(pick).ok_or_else(|| format!("no {t} metric"))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let f = fixture();
    let r = run_benchmark(&f.records, &engine(f, 4));
    let took = start.elapsed();
    let kinds: BTreeSet<Task> = r.rows.iter().map(|row| row.task).collect();
    ensure!(r.total == 30 && kinds.len() == 6, "{} queries over {} tasks", r.total, kinds.len());
    let loc = metric(&r, Task::Grd, |m| m.localization_accuracy)?;
    let miou = metric(&r, Task::Grd, |m| m.mean_iou)?;
    let cnt = metric(&r, Task::Cnt, |m| m.mae)?;
    let mesd = metric(&r, Task::MesD, |m| m.mae)?;
    let mesh = metric(&r, Task::MesH, |m| m.mae)?;
    let spr = metric(&r, Task::Spr, |m| m.exact_match)?;
    let cmp = metric(&r, Task::Cmp, |m| m.exact_match)?;
    let summary = format!("GRD {loc:.1}% mIoU {miou:.4}, CNT MAE {cnt}, MES-D MAE {mesd:.3} m, MES-H MAE {mesh:.3} m, SPR {spr:.0}%, CMP {cmp:.0}%, {took:.1?}");
    ensure!(loc == 100.0, "{summary}");
    ensure!(miou >= 0.85, "{summary}");
    ensure!(cnt == 0.0, "{summary}");
    ensure!(mesd <= 2.0, "{summary}");
    ensure!(mesh <= 0.5, "{summary}");
    ensure!(spr == 100.0 && cmp == 100.0, "{summary}");
    ensure!(took < Duration::from_secs(300), "{summary}");
    Ok(summary)
}

// ---------------------------------------------------------------- 6

fn ice_sweep_rates() -> Outcome {
    let f = fixture();
    let queries: Vec<&str> = f.records.iter().map(|r| r.query.as_str()).collect();
    let plan_sets: [(usize, Vec<&str>); 3] = [(5, queries[0..7].to_vec()), (10, queries[10..13].to_vec()), (15, vec![queries[29]])];
    let mut plan = FailurePlan::default();
    for (n, qs) in &plan_sets {
        plan = plan.fail(*n, qs.iter().copied());
    }
    let mut e = engine(f, 4);
    e.generator = Arc::new(f.suite.stub_generator().with_failures(plan));
    let reports = ice_sweep(&f.records, &e, &[5, 10, 15]);
    let mut got = Vec::new();
    for ((n, failing), r) in plan_sets.iter().zip(&reports) {
        ensure!(r.ice_count == *n, "report for {} examples", r.ice_count);
        let expect = 100.0 * (30 - failing.len()) as f64 / 30.0;
        ensure!((r.generation_success_rate - expect).abs() < 1e-9, "n={n}: rate {} vs {expect}", r.generation_success_rate);
        let failed: Vec<&str> = r.rows.iter().filter(|row| !row.generated).map(|row| row.query.as_str()).collect();
        ensure!(failed == *failing, "n={n}: failed set {failed:?}");
        for (task, m) in &r.tasks {
            let total = f.records.iter().filter(|x| x.task == *task).count();
            let bad = f.records.iter().filter(|x| x.task == *task && failing.contains(&x.query.as_str())).count();
            let expect = 100.0 * (total - bad) as f64 / total as f64;
            ensure!((m.generation_success_rate - expect).abs() < 1e-9, "n={n} {task}: {} vs {expect}", m.generation_success_rate);
        }
        got.push(format!("n={n}: {:.2}%", r.generation_success_rate));
    }
    Ok(got.join(", "))
}

// ---------------------------------------------------------------- 7

fn grd_record(dir: &Path, gt: &Segment) -> TaskRecord {
    let path = dir.join("gt.png");
    imageio::write_file(&path, &gt.to_png().unwrap()).unwrap();
    TaskRecord { line: 1, scene: "s".into(), task: Task::Grd, query: "q".into(), answer: Expected::Mask(path), view: Some(gt.view) }
}

fn metric_units() -> Outcome {
    let view = TopDownView::new([0.0, 20.0], 20, 20, 1.0).unwrap();
    let a = seg_with(view, |r, c| r < 10 && c < 10);
    let b = seg_with(view, |r, c| (5..15).contains(&r) && c < 10);
    let iou = compute_iou(Some(&a), &b).map_err(|e| e.to_string())?;
    ensure!(iou == 1.0 / 3.0, "half-overlap IoU {iou}");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    // gt 20 px; prediction inside it: 3 px gives exactly 0.15, 2 px gives 0.10
    let gt = seg_with(view, |r, c| r == 0 && c < 20);
    let rec = grd_record(dir.path(), &gt);
    let opts = ScoreOptions::default();
    let at = score_task(&rec, &Value::Segment(seg_with(view, |r, c| r == 0 && c < 3)), &opts);
    let below = score_task(&rec, &Value::Segment(seg_with(view, |r, c| r == 0 && c < 2)), &opts);
    ensure!(at.iou == Some(0.15) && at.hit == Some(true), "IoU 0.15 scored {:?} hit {:?}", at.iou, at.hit);
    ensure!(below.hit == Some(false), "IoU {:?} counted as hit", below.iou);
    Ok(format!("IoU = {iou} (1/3), 0.15 is a hit, 0.10 is a miss"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("georeferencing", georeferencing),
        ("LOD correctness", lod_correctness),
        ("GV-API geometry", gv_geometry),
        ("program engine", program_engine),
        ("end-to-end oracle benchmark", end_to_end),
        ("ICE sweep harness", ice_sweep_rates),
        ("metric units", metric_units),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
