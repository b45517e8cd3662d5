//! Deterministic synthetic city generator.
//!
//! Produces a three-level Gaussian forest over a flat ground sheet with
//! buildings, towers, billboards, trees and cars, together with per-node class
//! labels and per-object footprints in world meters. Every object owns its own
//! subtree (object root, 4x4 blocks, leaves) so coarse nodes never mix classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GaussianPrimitive, SceneTree};
use crate::geom::{point_in_polygon, polygon_centroid};
use crate::georef::{ControlPoint, ControlPointSet, GeoTransform};

pub const CLASS_GROUND: &str = "ground";
pub const CLASS_BUILDING: &str = "building";
pub const CLASS_TOWER: &str = "tower";
pub const CLASS_BILLBOARD: &str = "billboard";
pub const CLASS_TREE: &str = "tree";
pub const CLASS_CAR: &str = "car";

/// Fixed render colour per synthetic class. The oracle detector keys on these.
pub const CLASS_PALETTE: [(&str, [f32; 3]); 6] = [
    (CLASS_GROUND, [0.45, 0.45, 0.45]),
    (CLASS_BUILDING, [0.80, 0.72, 0.55]),
    (CLASS_TOWER, [0.55, 0.70, 0.90]),
    (CLASS_BILLBOARD, [0.95, 0.85, 0.10]),
    (CLASS_TREE, [0.15, 0.55, 0.20]),
    (CLASS_CAR, [0.85, 0.10, 0.10]),
];

pub fn class_color(class: &str) -> Option<[f32; 3]> {
    CLASS_PALETTE.iter().find(|(c, _)| *c == class).map(|(_, rgb)| *rgb)
}

const LANDMARK_NAMES: [&str; 24] = [
    "The View",
    "Quik Park",
    "Trinity Hall",
    "Harbor Plaza",
    "Union Exchange",
    "Mercer House",
    "Canal Works",
    "Liberty Court",
    "Pioneer Block",
    "Beacon Center",
    "Hudson Yard",
    "Grand Arcade",
    "Summit Hall",
    "Pearl Tower House",
    "Ferry Terminal",
    "Orchard Lofts",
    "Garnet Plaza",
    "Cobalt Building",
    "Atlas Depot",
    "Meridian Hall",
    "Crescent Works",
    "Juniper Court",
    "Sterling Block",
    "Willow House",
];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("could not place {class} #{index} without overlap after {retries} attempts")]
    SpecInfeasible { class: String, index: usize, retries: usize },
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Side length of the square city, meters.
    pub extent_m: f64,
    pub buildings: usize,
    pub towers: usize,
    pub billboards: usize,
    pub trees: usize,
    pub cars: usize,
    /// Meters per scene unit of the embedded transform.
    pub world_per_scene: f64,
    /// World coordinates of the scene origin.
    pub world_origin: [f64; 2],
    pub latent_dim: usize,
    pub ground_spacing_m: f64,
    pub roof_spacing_m: f64,
    pub max_retries: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            extent_m: 500.0,
            buildings: 20,
            towers: 4,
            billboards: 8,
            trees: 16,
            cars: 30,
            world_per_scene: 1.0,
            world_origin: [1000.0, 2000.0],
            latent_dim: 16,
            ground_spacing_m: 2.0,
            roof_spacing_m: 1.0,
            max_retries: 2000,
        }
    }
}

impl SynthSpec {
    pub fn empty_city() -> Self {
        Self { buildings: 0, towers: 0, billboards: 0, trees: 0, cars: 0, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    pub id: usize,
    pub class: String,
    pub name: Option<String>,
    pub aliases: Vec<String>,
    /// Counter-clockwise footprint ring in world meters.
    pub footprint: Vec<[f64; 2]>,
    /// Top surface elevation above ground, meters.
    pub height: f64,
    /// Elevation of the object's lowest visible surface, meters.
    pub base: f64,
}

impl SynthObject {
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &self.footprint {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        b
    }

    pub fn centroid(&self) -> [f64; 2] {
        polygon_centroid(&self.footprint)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        point_in_polygon(&self.footprint, p)
    }
}

/// Ground truth emitted alongside the synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub spec: SynthSpec,
    /// Class per scene node, same order as the tree.
    pub labels: Vec<String>,
    pub objects: Vec<SynthObject>,
    pub transform: GeoTransform,
}

impl SynthTruth {
    pub fn objects_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a SynthObject> + 'a {
        self.objects.iter().filter(move |o| o.class == class)
    }

    pub fn landmark(&self, name: &str) -> Option<&SynthObject> {
        self.objects.iter().find(|o| o.name.as_deref() == Some(name))
    }

    /// Class of the topmost surface at a world point.
    pub fn label_at(&self, p: [f64; 2]) -> &str {
        self.objects
            .iter()
            .filter(|o| o.contains(p))
            .max_by(|a, b| a.height.total_cmp(&b.height))
            .map_or(CLASS_GROUND, |o| o.class.as_str())
    }

    /// Control points at building corners, scene to world.
    pub fn control_points(&self, count: usize) -> ControlPointSet {
        let mut pairs = Vec::new();
        'outer: for o in &self.objects {
            for &w in &o.footprint {
                if pairs.len() == count {
                    break 'outer;
                }
                pairs.push(ControlPoint { scene: self.transform.to_scene(w), world: w });
            }
        }
        ControlPointSet::new(pairs)
    }
}

#[derive(Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn gap(&self, o: &Rect) -> f64 {
        let dx = (o.x0 - self.x1).max(self.x0 - o.x1).max(0.0);
        let dy = (o.y0 - self.y1).max(self.y0 - o.y1).max(0.0);
        dx.hypot(dy)
    }

    fn overlaps_with_gap(&self, o: &Rect, gap: f64) -> bool {
        self.gap(o) < gap
    }

    fn ring(&self) -> Vec<[f64; 2]> {
        vec![[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]]
    }
}

struct Builder<'a> {
    spec: &'a SynthSpec,
    nodes: Vec<GaussianPrimitive>,
    parent: Vec<Option<u32>>,
    level: Vec<u16>,
    labels: Vec<String>,
}

struct Leaf {
    world: [f64; 3],
    scale_m: [f64; 3],
    gx: usize,
    gy: usize,
}

impl Builder<'_> {
    fn to_scene(&self, w: [f64; 3]) -> [f32; 3] {
        let s = self.spec.world_per_scene;
        [
            ((w[0] - self.spec.world_origin[0]) / s) as f32,
            ((w[1] - self.spec.world_origin[1]) / s) as f32,
            (w[2] / s) as f32,
        ]
    }

    fn push(&mut self, g: GaussianPrimitive, parent: Option<u32>, level: u16, class: &str) -> u32 {
        self.nodes.push(g);
        self.parent.push(parent);
        self.level.push(level);
        self.labels.push(class.to_string());
        (self.nodes.len() - 1) as u32
    }

    fn summary(&self, leaves: &[&Leaf], opacity: f32, color: [f32; 3]) -> GaussianPrimitive {
        let s = self.spec.world_per_scene;
        let n = leaves.len() as f64;
        let mut mean = [0.0; 3];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut sc = [0.0f64; 3];
        for l in leaves {
            for k in 0..3 {
                mean[k] += l.world[k] / n;
                lo[k] = lo[k].min(l.world[k]);
                hi[k] = hi[k].max(l.world[k]);
                sc[k] = sc[k].max(l.scale_m[k]);
            }
        }
        let scale = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / 2.0 + sc[k]) / s) as f32);
        GaussianPrimitive::axis_aligned(self.to_scene(mean), scale, opacity, color, self.spec.latent_dim)
    }

    /// Emit one object subtree: a root, 4x4 grid blocks, then the leaves.
    fn emit(&mut self, leaves: Vec<Leaf>, class: &str, opacity: f32, color: [f32; 3], block: usize) {
        if leaves.is_empty() {
            return;
        }
        let refs: Vec<&Leaf> = leaves.iter().collect();
        let root = self.summary(&refs, opacity, color);
        let root = self.push(root, None, 0, class);
        let mut blocks: std::collections::BTreeMap<(usize, usize), Vec<&Leaf>> = Default::default();
        for l in &leaves {
            blocks.entry((l.gy / block, l.gx / block)).or_default().push(l);
        }
        let s = self.spec.world_per_scene;
        for members in blocks.values() {
            let mid = self.summary(members, opacity, color);
            let mid = self.push(mid, Some(root), 1, class);
            for l in members {
                let scale = l.scale_m.map(|v| (v / s) as f32);
                let g = GaussianPrimitive::axis_aligned(self.to_scene(l.world), scale, opacity, color, self.spec.latent_dim);
                self.push(g, Some(mid), 2, class);
            }
        }
    }
}

/// Flat sheet of leaves over a rectangle at elevation `z`, centres inset half a spacing.
fn sheet(r: &Rect, z: f64, spacing: f64, sigma: f64, thickness: f64) -> Vec<Leaf> {
    let nx = ((r.x1 - r.x0) / spacing).round().max(1.0) as usize;
    let ny = ((r.y1 - r.y0) / spacing).round().max(1.0) as usize;
    let (sx, sy) = ((r.x1 - r.x0) / nx as f64, (r.y1 - r.y0) / ny as f64);
    let mut out = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            out.push(Leaf {
                world: [r.x0 + (gx as f64 + 0.5) * sx, r.y0 + (gy as f64 + 0.5) * sy, z],
                scale_m: [sigma * sx / spacing, sigma * sy / spacing, thickness],
                gx,
                gy,
            });
        }
    }
    out
}

/// Generate a synthetic city. Deterministic in `(seed, spec)`.
pub fn synth_city(seed: u64, spec: &SynthSpec) -> Result<(SceneTree, SynthTruth), SynthError> {
    if !(spec.extent_m > 0.0 && spec.world_per_scene > 0.0 && spec.ground_spacing_m > 0.0 && spec.roof_spacing_m > 0.0) {
        return Err(SynthError::InvalidSpec("extent, scale and spacings must be positive".into()));
    }
    if spec.latent_dim == 0 {
        return Err(SynthError::InvalidSpec("latent_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = spec.extent_m;
    let (ox, oy) = (spec.world_origin[0], spec.world_origin[1]);
    let margin = 15.0;

    let mut placed: Vec<(Rect, &'static str)> = Vec::new();
    let mut objects: Vec<SynthObject> = Vec::new();

    // (class, count, min gap to existing objects)
    let plan: [(&'static str, usize, f64); 5] = [
        (CLASS_BUILDING, spec.buildings, 14.0),
        (CLASS_TOWER, spec.towers, 14.0),
        (CLASS_BILLBOARD, spec.billboards, 8.0),
        (CLASS_TREE, spec.trees, 5.0),
        (CLASS_CAR, spec.cars, 4.0),
    ];
    let mut landmark_idx = 0usize;
    for (class, count, gap) in plan {
        for index in 0..count {
            let mut attempt = 0;
            let (rect, height) = loop {
                if attempt == spec.max_retries {
                    return Err(SynthError::SpecInfeasible { class: class.into(), index, retries: spec.max_retries });
                }
                attempt += 1;
                let (w, d, h) = match class {
                    CLASS_BUILDING => (rng.random_range(22.0..44.0), rng.random_range(22.0..44.0), rng.random_range(12.0..60.0)),
                    CLASS_TOWER => (rng.random_range(9.0..13.0), rng.random_range(9.0..13.0), rng.random_range(70.0..110.0)),
                    CLASS_BILLBOARD => {
                        let (a, b) = (rng.random_range(12.0..16.0), rng.random_range(4.0..6.0));
                        if rng.random_bool(0.5) { (a, b, 8.0) } else { (b, a, 8.0) }
                    }
                    CLASS_TREE => {
                        let r = rng.random_range(3.0..5.0);
                        (2.0 * r, 2.0 * r, rng.random_range(6.0..9.0))
                    }
                    _ => {
                        if rng.random_bool(0.5) { (4.6, 2.0, 1.5) } else { (2.0, 4.6, 1.5) }
                    }
                };
                // snap to whole meters so raster edges line up with pixel boundaries at 1 m/px
                let w: f64 = if class == CLASS_CAR { w } else { f64::round(w) };
                let d: f64 = if class == CLASS_CAR { d } else { f64::round(d) };
                if e - 2.0 * margin - w <= 0.0 || e - 2.0 * margin - d <= 0.0 {
                    continue;
                }
                let x0 = (rng.random_range(margin..(e - margin - w))).round();
                let y0 = (rng.random_range(margin..(e - margin - d))).round();
                let r = Rect { x0: ox + x0, y0: oy + y0, x1: ox + x0 + w, y1: oy + y0 + d };
                if placed.iter().all(|(p, pc)| {
                    let g = if *pc == CLASS_BUILDING || *pc == CLASS_TOWER { gap.max(14.0) } else { gap };
                    !r.overlaps_with_gap(p, g)
                }) {
                    break (r, f64::round(h * 2.0) / 2.0);
                }
            };
            placed.push((rect, class));
            let (name, aliases) = match class {
                CLASS_BUILDING | CLASS_TOWER => {
                    let name = LANDMARK_NAMES.get(landmark_idx).map_or_else(|| format!("Landmark {landmark_idx}"), |s| s.to_string());
                    let alias = format!("Building {}", letter_code(landmark_idx));
                    landmark_idx += 1;
                    (Some(name), vec![alias])
                }
                _ => (None, Vec::new()),
            };
            let footprint = if class == CLASS_TREE {
                let (cx, cy, r) = ((rect.x0 + rect.x1) / 2.0, (rect.y0 + rect.y1) / 2.0, (rect.x1 - rect.x0) / 2.0);
                (0..24)
                    .map(|k| {
                        let t = std::f64::consts::TAU * k as f64 / 24.0;
                        [cx + r * t.cos(), cy + r * t.sin()]
                    })
                    .collect()
            } else {
                rect.ring()
            };
            let base = match class {
                CLASS_BILLBOARD => height,
                CLASS_TREE => height - 3.0,
                CLASS_CAR => 0.5,
                _ => 0.0,
            };
            objects.push(SynthObject { id: objects.len(), class: class.into(), name, aliases, footprint, height, base });
        }
    }

    let mut b = Builder { spec, nodes: Vec::new(), parent: Vec::new(), level: Vec::new(), labels: Vec::new() };

    // Ground sheet, one subtree per 32x32 leaf tile.
    let ground = sheet(&Rect { x0: ox, y0: oy, x1: ox + e, y1: oy + e }, 0.0, spec.ground_spacing_m, 0.6 * spec.ground_spacing_m, 0.05);
    let tile = 16usize;
    let mut tiles: std::collections::BTreeMap<(usize, usize), Vec<Leaf>> = Default::default();
    for l in ground {
        tiles.entry((l.gy / tile, l.gx / tile)).or_default().push(l);
    }
    let ground_color = class_color(CLASS_GROUND).unwrap();
    for (_, leaves) in tiles {
        b.emit(leaves, CLASS_GROUND, 0.98, ground_color, 4);
    }

    for (obj, (rect, _)) in objects.iter().zip(&placed) {
        let color = class_color(&obj.class).unwrap();
        let leaves = match obj.class.as_str() {
            CLASS_TREE => {
                let (cx, cy, r) = ((rect.x0 + rect.x1) / 2.0, (rect.y0 + rect.y1) / 2.0, (rect.x1 - rect.x0) / 2.0);
                sheet(rect, obj.height - 2.0, 1.5, 0.9, 1.6)
                    .into_iter()
                    .filter(|l| (l.world[0] - cx).hypot(l.world[1] - cy) <= r - 0.5)
                    .map(|mut l| {
                        // upright ellipsoids: shortest axis horizontal, so never "flat"
                        l.scale_m = [0.9, 1.1, 1.6];
                        l
                    })
                    .collect()
            }
            CLASS_CAR => sheet(rect, obj.height, 1.0, 0.5, 0.35),
            _ => sheet(rect, obj.height, spec.roof_spacing_m, 0.5 * spec.roof_spacing_m, 0.05),
        };
        b.emit(leaves, &obj.class, 0.98, color, 4);
    }

    let transform = GeoTransform::from_similarity(spec.world_per_scene, 0.0, spec.world_origin);
    let labels = std::mem::take(&mut b.labels);
    let mut tree = SceneTree::from_parts(spec.latent_dim, b.nodes, b.parent, b.level);
    tree.set_transform(Some(transform.clone()));
    let truth = SynthTruth { seed, spec: spec.clone(), labels, objects, transform };
    Ok((tree, truth))
}

fn letter_code(i: usize) -> String {
    let letters = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    if i < 26 {
        (letters[i] as char).to_string()
    } else {
        format!("{}{}", letters[i / 26 - 1] as char, letters[i % 26] as char)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::validate_tree;

    fn small() -> SynthSpec {
        SynthSpec { extent_m: 200.0, buildings: 4, towers: 1, billboards: 2, trees: 3, cars: 5, ..SynthSpec::default() }
    }

    #[test]
    fn synth_tree_is_valid_and_three_levels() {
        let (tree, truth) = synth_city(1, &small()).unwrap();
        assert!(validate_tree(&tree).is_empty(), "{:?}", &validate_tree(&tree)[..3.min(validate_tree(&tree).len())]);
        assert_eq!(tree.depth(), 3);
        assert_eq!(truth.labels.len(), tree.len());
        assert!(tree.leaves().all(|i| tree.level[i] == 2));
    }

    #[test]
    fn zero_buildings_is_ground_only() {
        let (tree, truth) = synth_city(3, &SynthSpec { extent_m: 100.0, ..SynthSpec::empty_city() }).unwrap();
        let classes: std::collections::BTreeSet<_> = truth.labels.iter().cloned().collect();
        assert_eq!(classes.into_iter().collect::<Vec<_>>(), vec![CLASS_GROUND.to_string()]);
        assert!(truth.objects.is_empty());
        assert!(!tree.is_empty());
    }

    #[test]
    fn same_seed_same_tree() {
        let (a, ta) = synth_city(11, &small()).unwrap();
        let (b, tb) = synth_city(11, &small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = synth_city(12, &small()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn crowded_spec_is_infeasible() {
        let spec = SynthSpec { extent_m: 60.0, buildings: 30, max_retries: 50, ..SynthSpec::empty_city() };
        assert!(matches!(synth_city(0, &spec), Err(SynthError::SpecInfeasible { .. })));
    }

    #[test]
    fn roof_leaves_are_flat() {
        let (tree, truth) = synth_city(2, &small()).unwrap();
        for i in tree.leaves() {
            if truth.labels[i] == CLASS_BUILDING {
                let a = tree.nodes[i].shortest_axis();
                assert!((a[2].abs() - 1.0).abs() < 1e-6);
            }
        }
    }

}
