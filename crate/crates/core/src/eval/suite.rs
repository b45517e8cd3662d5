//! Synthetic benchmark: a generated city, its landmark registry and a
//! 30-query suite whose answers are read off the generator's ground truth.
//!
//! Queries are only emitted where the answer is unambiguous with a few meters
//! of slack, so a correct engine should score perfectly on them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::bench::{SceneAssets, SceneCatalog};
use super::Task;
use crate::field::{bake_features, FieldError, LatentCodec};
use crate::geom::{boundary_distance, convex_hull, point_in_polygon, polygon_area, polygon_distance};
use crate::imageio::{self, ImageError};
use crate::program::Ice;
use crate::providers::{OracleDetector, OracleEmbedder, StubGenerator, ORACLE_DIM};
use crate::registry::{rasterize_polygon, Landmark, Registry, RegistryError};
use crate::render::TopDownView;
use crate::scene::synth::{synth_city, SynthError, SynthObject, SynthSpec, SynthTruth, CLASS_BILLBOARD, CLASS_BUILDING, CLASS_CAR, CLASS_TOWER};
use crate::scene::{save_scene, SceneError, SceneTree};
use crate::segment::Segment;

pub const SUITE_SIZE: usize = 30;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("could not build the query suite: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SuiteAnswer {
    /// Footprint of this object id is the ground-truth mask.
    Object(usize),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteQuery {
    pub task: Task,
    pub query: String,
    pub program: String,
    pub answer: SuiteAnswer,
}

#[derive(Debug, Clone)]
pub struct SynthSuite {
    pub scene_id: String,
    /// Scene with class features baked in.
    pub tree: SceneTree,
    pub truth: SynthTruth,
    pub registry: Registry,
    /// 1 m/px north-up view over the whole city.
    pub view: TopDownView,
    pub queries: Vec<SuiteQuery>,
}

// per-task quotas
const N_GRD_RING: usize = 3;
const N_GRD_DIR: usize = 3;
const N_GRD_BETWEEN: usize = 1;
const N_GRD_NAMED: usize = 1;
const N_CNT_CARS: usize = 3;
const N_MES: usize = 5;
const N_CMP_TALLER: usize = 3;

/// Slack kept between any object and a region boundary, meters.
const MARGIN: f64 = 3.0;

fn corners(o: &SynthObject) -> [[f64; 2]; 4] {
    let b = o.bbox();
    [[b[0], b[1]], [b[2], b[1]], [b[2], b[3]], [b[0], b[3]]]
}

/// Farthest distance from `lm`'s outline to any point of `o`.
fn far_dist(lm: &SynthObject, o: &SynthObject) -> f64 {
    corners(o).iter().map(|&p| boundary_distance(&lm.footprint, p)).fold(0.0, f64::max)
}

fn round_up(v: f64, step: f64) -> f64 {
    (v / step).ceil() * step
}

#[derive(Clone, Copy)]
enum Side {
    N,
    S,
    E,
    W,
}

impl Side {
    const ALL: [Side; 4] = [Side::N, Side::S, Side::E, Side::W];

    fn word(self) -> &'static str {
        match self {
            Side::N => "north",
            Side::S => "south",
            Side::E => "east",
            Side::W => "west",
        }
    }

    /// Signed depth of `o` past the landmark's edge on this side: (min, max)
    /// over the object's extent. Positive means beyond the edge.
    fn depth(self, lm: &SynthObject, o: &SynthObject) -> (f64, f64) {
        let (l, b) = (lm.bbox(), o.bbox());
        match self {
            Side::N => (b[1] - l[3], b[3] - l[3]),
            Side::S => (l[1] - b[3], l[1] - b[1]),
            Side::E => (b[0] - l[2], b[2] - l[2]),
            Side::W => (l[0] - b[2], l[0] - b[0]),
        }
    }
}

struct Builder<'a> {
    truth: &'a SynthTruth,
    queries: Vec<SuiteQuery>,
}

impl Builder<'_> {
    fn landmarks(&self) -> Vec<&SynthObject> {
        self.truth.objects.iter().filter(|o| o.name.is_some()).collect()
    }

    fn of<'s>(&'s self, class: &'s str) -> Vec<&'s SynthObject> {
        self.truth.objects_of(class).collect()
    }

    fn push(&mut self, task: Task, query: String, lines: &[String], answer: SuiteAnswer) {
        self.queries.push(SuiteQuery { task, query, program: lines.join("\n"), answer });
    }

    fn has_query(&self, q: &str) -> bool {
        self.queries.iter().any(|x| x.query == q)
    }

    /// Landmarks rotated so each template starts somewhere else.
    fn rotated(&self, offset: usize) -> Vec<&SynthObject> {
        let mut v = self.landmarks();
        let k = offset % v.len().max(1);
        v.rotate_left(k);
        v
    }

    fn grd_ring(&mut self, quota: usize) -> usize {
        let boards: Vec<SynthObject> = self.of(CLASS_BILLBOARD).into_iter().cloned().collect();
        let mut made = 0;
        for lm in self.rotated(0).into_iter().cloned().collect::<Vec<_>>() {
            if made == quota {
                break;
            }
            for b in &boards {
                let d = round_up(far_dist(&lm, b) + MARGIN, 5.0);
                if d > 150.0 {
                    continue;
                }
                let clear = boards.iter().filter(|o| o.id != b.id).all(|o| polygon_distance(&lm.footprint, &o.footprint) >= d + MARGIN + 1.0);
                if !clear {
                    continue;
                }
                let name = lm.name.clone().unwrap();
                let q = format!("The billboard within {d} meters of {name}");
                self.push(
                    Task::Grd,
                    q,
                    &[
                        format!("SEG0=GetLandmarkSeg(query='{name}')"),
                        format!("SEG1=SegAround(area=SEG0,distance={d})"),
                        "ANSWER=GetStructureSeg(query='billboard',area=SEG1)".into(),
                    ],
                    SuiteAnswer::Object(b.id),
                );
                made += 1;
                break;
            }
        }
        made
    }

    fn grd_direction(&mut self, quota: usize) -> usize {
        let mut made = 0;
        let lms: Vec<SynthObject> = self.rotated(5).into_iter().cloned().collect();
        'lm: for (k, lm) in lms.iter().enumerate() {
            if made == quota {
                break;
            }
            for s in 0..4 {
                let side = Side::ALL[(k + s) % 4];
                for class in [CLASS_BUILDING, CLASS_TOWER] {
                    let objs: Vec<&SynthObject> = self.of(class).into_iter().filter(|o| o.id != lm.id).collect();
                    let inside: Vec<&&SynthObject> = objs.iter().filter(|o| side.depth(lm, o).0 >= MARGIN).collect();
                    let touching: Vec<&&SynthObject> = objs.iter().filter(|o| side.depth(lm, o).1 > -MARGIN).collect();
                    let Some(target) = inside.iter().max_by(|a, b| polygon_area(&a.footprint).total_cmp(&polygon_area(&b.footprint))) else {
                        continue;
                    };
                    if self.queries.iter().any(|q| q.answer == SuiteAnswer::Object(target.id)) {
                        continue;
                    }
                    let area = polygon_area(&target.footprint);
                    let unique = touching.iter().filter(|o| o.id != target.id).all(|o| polygon_area(&o.footprint) <= 0.75 * area);
                    if !unique {
                        continue;
                    }
                    let name = lm.name.clone().unwrap();
                    let q = if class == CLASS_TOWER && touching.len() == 1 {
                        format!("The {class} {} of {name}", side.word())
                    } else {
                        format!("The largest {class} {} of {name}", side.word())
                    };
                    let answer = SuiteAnswer::Object(target.id);
                    self.push(
                        Task::Grd,
                        q,
                        &[
                            format!("SEG0=GetLandmarkSeg(query='{name}')"),
                            format!("SEG1=SegDirection(seg=SEG0,direction='{}')", side.word()),
                            format!("SEG2=GetStructureSeg(query='{class}',area=SEG1)"),
                            "ANSWER=LargestSeg(segs=SEG2)".into(),
                        ],
                        answer,
                    );
                    made += 1;
                    continue 'lm;
                }
            }
        }
        made
    }

    fn grd_between(&mut self, quota: usize) -> usize {
        let boards: Vec<SynthObject> = self.of(CLASS_BILLBOARD).into_iter().cloned().collect();
        let lms: Vec<SynthObject> = self.landmarks().into_iter().cloned().collect();
        let mut made = 0;
        for (i, a) in lms.iter().enumerate() {
            for b in &lms[i + 1..] {
                if made == quota {
                    return made;
                }
                let pts: Vec<[f64; 2]> = corners(a).into_iter().chain(corners(b)).collect();
                let hull = convex_hull(&pts);
                let within = |o: &SynthObject| corners(o).iter().all(|&p| point_in_polygon(&hull, p) && boundary_distance(&hull, p) >= MARGIN);
                let inside: Vec<&SynthObject> = boards.iter().filter(|o| within(o)).collect();
                if inside.len() != 1 {
                    continue;
                }
                let target = inside[0];
                if !boards.iter().filter(|o| o.id != target.id).all(|o| polygon_distance(&hull, &o.footprint) >= MARGIN) {
                    continue;
                }
                let (na, nb) = (a.name.clone().unwrap(), b.name.clone().unwrap());
                self.push(
                    Task::Grd,
                    format!("The billboard between {na} and {nb}"),
                    &[
                        format!("SEG0=GetLandmarkSeg(query='{na}')"),
                        format!("SEG1=GetLandmarkSeg(query='{nb}')"),
                        "SEG2=SegBetween(seg1=SEG0,seg2=SEG1)".into(),
                        "ANSWER=GetStructureSeg(query='billboard',area=SEG2)".into(),
                    ],
                    SuiteAnswer::Object(target.id),
                );
                made += 1;
            }
        }
        made
    }

    fn grd_named(&mut self, quota: usize) -> usize {
        let lms: Vec<SynthObject> = self.rotated(2).into_iter().cloned().collect();
        let mut made = 0;
        for lm in lms.iter().take(quota) {
            let alias = lm.aliases.first().cloned().unwrap_or_else(|| lm.name.clone().unwrap());
            self.push(Task::Grd, alias.clone(), &[format!("ANSWER=GetLandmarkSeg(query='{alias}')")], SuiteAnswer::Object(lm.id));
            made += 1;
        }
        made
    }

    /// Cars whose centres lie within `d` of the landmark, or None when a car
    /// sits too close to the ring edge.
    fn cars_within(&self, lm: &SynthObject, d: f64) -> Option<usize> {
        let mut n = 0;
        for car in self.of(CLASS_CAR) {
            let c = boundary_distance(&lm.footprint, car.centroid());
            if (c - d).abs() < MARGIN + 1.0 {
                return None;
            }
            n += usize::from(c < d);
        }
        Some(n)
    }

    fn count_program(name: &str, d: f64, class: &str) -> Vec<String> {
        vec![
            format!("SEG0=GetLandmarkSeg(query='{name}')"),
            format!("SEG1=SegAround(area=SEG0,distance={d})"),
            format!("DETS=GetObjectSeg(query='{class}',area=SEG1)"),
            "ANSWER=Count(dets=DETS)".into(),
        ]
    }

    fn cnt(&mut self) -> usize {
        let mut made = 0;
        let towers = self.of(CLASS_TOWER).len();
        self.push(
            Task::Cnt,
            "How many towers are there?".into(),
            &["DETS=GetObjectSeg(query='tower')".into(), "ANSWER=Count(dets=DETS)".into()],
            SuiteAnswer::Number(towers as f64),
        );
        made += 1;

        let lms: Vec<SynthObject> = self.rotated(9).into_iter().cloned().collect();
        let mut cars = 0;
        for lm in &lms {
            if cars == N_CNT_CARS {
                break;
            }
            for d in [60.0, 80.0, 100.0, 120.0] {
                if let Some(n @ 2..=8) = self.cars_within(lm, d) {
                    let name = lm.name.clone().unwrap();
                    self.push(
                        Task::Cnt,
                        format!("How many cars are within {d} meters of {name}?"),
                        &Self::count_program(&name, d, "car"),
                        SuiteAnswer::Number(n as f64),
                    );
                    cars += 1;
                    break;
                }
            }
        }
        made += cars;

        // buildings on one side, with nothing straddling the edge
        let buildings: Vec<SynthObject> = self.of(CLASS_BUILDING).into_iter().cloned().collect();
        'outer: for lm in &lms {
            for side in Side::ALL {
                let others: Vec<&SynthObject> = buildings.iter().filter(|o| o.id != lm.id).collect();
                let clean = others.iter().all(|o| {
                    let (lo, hi) = side.depth(lm, o);
                    lo >= MARGIN || hi <= -MARGIN
                });
                let n = others.iter().filter(|o| side.depth(lm, o).0 >= MARGIN).count();
                if clean && n >= 2 {
                    let name = lm.name.clone().unwrap();
                    self.push(
                        Task::Cnt,
                        format!("How many buildings are {} of {name}?", side.word()),
                        &[
                            format!("SEG0=GetLandmarkSeg(query='{name}')"),
                            format!("SEG1=SegDirection(seg=SEG0,direction='{}')", side.word()),
                            "DETS=GetObjectSeg(query='building',area=SEG1)".into(),
                            "ANSWER=Count(dets=DETS)".into(),
                        ],
                        SuiteAnswer::Number(n as f64),
                    );
                    made += 1;
                    break 'outer;
                }
            }
        }
        made
    }

    fn label(lm: &SynthObject, k: usize) -> String {
        // every other query refers to the landmark by its alias
        if k % 2 == 1 {
            lm.aliases.first().cloned().unwrap_or_else(|| lm.name.clone().unwrap())
        } else {
            lm.name.clone().unwrap()
        }
    }

    fn mes(&mut self) {
        let lms: Vec<SynthObject> = self.rotated(4).into_iter().cloned().collect();
        for k in 0..N_MES {
            let (a, b) = (&lms[(2 * k) % lms.len()], &lms[(2 * k + 1) % lms.len()]);
            let (na, nb) = (Self::label(a, k), Self::label(b, k + 1));
            let (ca, cb) = (a.centroid(), b.centroid());
            self.push(
                Task::MesD,
                format!("How far is {na} from {nb}?"),
                &[
                    format!("SEG0=GetLandmarkSeg(query='{na}')"),
                    format!("SEG1=GetLandmarkSeg(query='{nb}')"),
                    "ANSWER=MeasureDist(from=SEG0,to=SEG1)".into(),
                ],
                SuiteAnswer::Number((ca[0] - cb[0]).hypot(ca[1] - cb[1])),
            );
        }
        // heights: towers first so at least one tall structure is measured
        let mut by_class: Vec<SynthObject> = lms.iter().filter(|o| o.class == CLASS_TOWER).take(2).cloned().collect();
        by_class.extend(lms.iter().filter(|o| o.class == CLASS_BUILDING).cloned());
        for (k, lm) in by_class.iter().take(N_MES).enumerate() {
            let n = Self::label(lm, k);
            let q = if k % 2 == 0 { format!("How tall is {n}?") } else { format!("What is the height of {n}?") };
            self.push(Task::MesH, q, &[format!("SEG0=GetLandmarkSeg(query='{n}')"), "ANSWER=MeasureHeight(area=SEG0)".into()], SuiteAnswer::Number(lm.height));
        }
    }

    fn height_pairs(&self, offset: usize, min_gap: f64) -> Vec<(SynthObject, SynthObject)> {
        let lms: Vec<SynthObject> = self.rotated(offset).into_iter().cloned().collect();
        lms.chunks(2).filter(|p| p.len() == 2 && (p[0].height - p[1].height).abs() >= min_gap).map(|p| (p[0].clone(), p[1].clone())).collect()
    }

    fn height_lines(na: &str, nb: &str) -> Vec<String> {
        vec![
            format!("SEG0=GetLandmarkSeg(query='{na}')"),
            format!("SEG1=GetLandmarkSeg(query='{nb}')"),
            "H0=MeasureHeight(area=SEG0)".into(),
            "H1=MeasureHeight(area=SEG1)".into(),
        ]
    }

    fn cmp_spr(&mut self) -> Result<(), SuiteError> {
        let pairs = self.height_pairs(7, 4.0);
        if pairs.len() < N_CMP_TALLER + 1 {
            return Err(SuiteError::Infeasible("not enough landmark pairs with distinct heights".into()));
        }
        for (a, b) in pairs.iter().take(N_CMP_TALLER) {
            let (na, nb) = (a.name.clone().unwrap(), b.name.clone().unwrap());
            let mut lines = Self::height_lines(&na, &nb);
            lines.push(format!("ANSWER=IfElse(cond=GT(a=H0,b=H1),a='{na}',b='{nb}')"));
            let winner = if a.height > b.height { na.clone() } else { nb.clone() };
            self.push(Task::Cmp, format!("Which is taller, {na} or {nb}?"), &lines, SuiteAnswer::Text(winner));
        }

        // closer-of-two comparison
        let lms: Vec<SynthObject> = self.rotated(11).into_iter().cloned().collect();
        let dist = |a: &SynthObject, b: &SynthObject| {
            let (ca, cb) = (a.centroid(), b.centroid());
            (ca[0] - cb[0]).hypot(ca[1] - cb[1])
        };
        let triple = lms.windows(3).find(|w| (dist(&w[0], &w[1]) - dist(&w[0], &w[2])).abs() >= 10.0);
        let Some(w) = triple else {
            return Err(SuiteError::Infeasible("no landmark triple for a distance comparison".into()));
        };
        let (na, nb, nc) = (w[0].name.clone().unwrap(), w[1].name.clone().unwrap(), w[2].name.clone().unwrap());
        let closer = if dist(&w[0], &w[1]) < dist(&w[0], &w[2]) { nb.clone() } else { nc.clone() };
        self.push(
            Task::Cmp,
            format!("Which is closer to {na}, {nb} or {nc}?"),
            &[
                format!("SEG0=GetLandmarkSeg(query='{na}')"),
                format!("SEG1=GetLandmarkSeg(query='{nb}')"),
                format!("SEG2=GetLandmarkSeg(query='{nc}')"),
                "D1=MeasureDist(from=SEG0,to=SEG1)".into(),
                "D2=MeasureDist(from=SEG0,to=SEG2)".into(),
                format!("ANSWER=IfElse(cond=LT(a=D1,b=D2),a='{nb}',b='{nc}')"),
            ],
            SuiteAnswer::Text(closer),
        );

        // spatial yes/no: a height comparison, a "no" car query and a "yes" billboard query
        let (a, b) = &pairs[N_CMP_TALLER];
        let (na, nb) = (a.name.clone().unwrap(), b.name.clone().unwrap());
        let mut lines = Self::height_lines(&na, &nb);
        lines.push("ANSWER=YesNo(b=GT(a=H0,b=H1))".into());
        let yes = if a.height > b.height { "yes" } else { "no" };
        self.push(Task::Spr, format!("Is {na} taller than {nb}?"), &lines, SuiteAnswer::Text(yes.into()));

        let mut found_no = false;
        'no: for lm in &lms {
            for d in [20.0, 30.0, 40.0] {
                if self.cars_within(lm, d) == Some(0) {
                    let name = lm.name.clone().unwrap();
                    let mut lines = Self::count_program(&name, d, "car");
                    lines.pop();
                    lines.push("ANSWER=YesNo(b=GT(a=Count(dets=DETS),b=0))".into());
                    self.push(Task::Spr, format!("Are there any cars within {d} meters of {name}?"), &lines, SuiteAnswer::Text("no".into()));
                    found_no = true;
                    break 'no;
                }
            }
        }
        let boards: Vec<SynthObject> = self.of(CLASS_BILLBOARD).into_iter().cloned().collect();
        let mut found_yes = false;
        'yes: for lm in lms.iter().rev() {
            for b in &boards {
                let d = round_up(far_dist(lm, b) + MARGIN, 10.0);
                let q = format!("Is there a billboard within {d} meters of {}?", lm.name.clone().unwrap());
                if d <= 120.0 && !self.has_query(&q) {
                    let name = lm.name.clone().unwrap();
                    let mut lines = Self::count_program(&name, d, "billboard");
                    lines.pop();
                    lines.push("ANSWER=YesNo(b=GT(a=Count(dets=DETS),b=0))".into());
                    self.push(Task::Spr, q, &lines, SuiteAnswer::Text("yes".into()));
                    found_yes = true;
                    break 'yes;
                }
            }
        }
        if !(found_no && found_yes) {
            return Err(SuiteError::Infeasible("spatial yes/no queries".into()));
        }
        Ok(())
    }
}

impl SynthSuite {
    /// Build the city for `seed` and derive the 30-query suite.
    pub fn generate(seed: u64, spec: &SynthSpec) -> Result<Self, SuiteError> {
        let (raw, truth) = synth_city(seed, spec)?;
        let embedder = OracleEmbedder::synth_classes();
        let tree = bake_features(&raw, &truth.labels, &embedder, &LatentCodec::identity(ORACLE_DIM))?;
        let registry = Registry::from_truth(&truth)?;
        let res = 1.0 / spec.world_per_scene;
        let nw = truth.transform.to_scene([spec.world_origin[0], spec.world_origin[1] + spec.extent_m]);
        let side = spec.extent_m.round() as usize;
        let view = TopDownView::new(nw, side, side, res).map_err(|e| SuiteError::Infeasible(e.to_string()))?;

        let mut b = Builder { truth: &truth, queries: Vec::new() };
        let mut grd = b.grd_ring(N_GRD_RING);
        grd += b.grd_direction(N_GRD_DIR);
        grd += b.grd_between(N_GRD_BETWEEN);
        grd += b.grd_named(N_GRD_NAMED);
        let want_grd = N_GRD_RING + N_GRD_DIR + N_GRD_BETWEEN + N_GRD_NAMED;
        if grd < want_grd {
            // top up with more landmark lookups
            let extra: Vec<SynthObject> = b.rotated(13).into_iter().cloned().collect();
            for lm in extra.iter().take(want_grd - grd) {
                let name = lm.name.clone().unwrap();
                b.push(Task::Grd, name.clone(), &[format!("ANSWER=GetLandmarkSeg(query='{name}')")], SuiteAnswer::Object(lm.id));
            }
        }
        b.cnt();
        b.mes();
        b.cmp_spr()?;
        let queries = b.queries;
        if queries.len() != SUITE_SIZE {
            return Err(SuiteError::Infeasible(format!("built {} queries, expected {SUITE_SIZE}", queries.len())));
        }
        Ok(Self { scene_id: format!("synth_{seed}"), tree, truth, registry, view, queries })
    }

    /// Ground-truth mask of an object's footprint on the suite view.
    pub fn object_mask(&self, id: usize) -> Segment {
        let o = &self.truth.objects[id];
        let lm = Landmark { name: format!("object {id}"), aliases: vec![], tags: vec![], rings: vec![o.footprint.clone()] };
        rasterize_polygon(&lm, &self.view, &self.truth.transform)
    }

    pub fn programs(&self) -> Vec<Ice> {
        self.queries.iter().map(|q| Ice { query: q.query.clone(), program: q.program.clone(), task: Some(q.task.to_string()) }).collect()
    }

    /// Generator that answers every suite query with its reference program.
    pub fn stub_generator(&self) -> StubGenerator {
        StubGenerator::new(self.queries.iter().map(|q| (q.query.clone(), q.program.clone())))
    }

    pub fn assets(&self) -> SceneAssets {
        SceneAssets { tree: Arc::new(self.tree.clone()), registry: Arc::new(self.registry.clone()), transform: self.truth.transform.clone() }
    }

    /// Catalog holding this scene with oracle embedder and detector.
    pub fn oracle_catalog(&self) -> SceneCatalog {
        let mut c = SceneCatalog::new(Arc::new(OracleEmbedder::synth_classes()), Arc::new(OracleDetector::default()));
        c.insert(self.scene_id.clone(), self.assets());
        c
    }

    /// Write scene, registry, control points, truth, programs, masks and
    /// `dataset.jsonl` into `dir`; returns the dataset path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, SuiteError> {
        std::fs::create_dir_all(dir.join("masks"))?;
        let id = &self.scene_id;
        save_scene(&self.tree, dir.join(format!("{id}.gclf")))?;
        self.registry.save(dir.join(format!("{id}.landmarks.geojson")))?;
        std::fs::write(dir.join(format!("{id}.control_points.json")), pretty(&self.truth.control_points(25)))?;
        std::fs::write(dir.join(format!("{id}.truth.json")), pretty(&self.truth))?;
        std::fs::write(dir.join("programs.json"), pretty(&self.programs()))?;
        let mut lines = String::new();
        for (i, q) in self.queries.iter().enumerate() {
            let mut rec = serde_json::json!({ "scene": id, "task": q.task, "query": q.query, "view": self.view });
            match &q.answer {
                SuiteAnswer::Object(obj) => {
                    let rel = format!("masks/q{i:02}.png");
                    imageio::write_file(dir.join(&rel), &self.object_mask(*obj).to_png()?)?;
                    rec["gt_mask"] = rel.into();
                }
                SuiteAnswer::Number(n) => rec["answer"] = (*n).into(),
                SuiteAnswer::Text(t) => rec["answer"] = t.clone().into(),
            }
            lines.push_str(&rec.to_string());
            lines.push('\n');
        }
        let path = dir.join("dataset.jsonl");
        std::fs::write(&path, lines)?;
        Ok(path)
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes")
}
