//! Hierarchical Gaussian scene model.
//!
//! A [`SceneTree`] is a forest of anisotropic Gaussian primitives ordered
//! coarse to fine. Level 0 nodes are roots; every child sits exactly one level
//! below its parent. The tree is immutable once built or loaded and can be
//! shared freely between worker threads.

mod container;
pub mod synth;

pub use container::{load_scene, read_scene, save_scene, write_scene, CONTAINER_MAGIC, CONTAINER_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::georef::GeoTransform;

/// Default latent width for language features (compressed CLIP features).
pub const DEFAULT_LATENT_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene container: {0}")]
    MalformedContainer(String),
    #[error("scene violates {} invariant(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvariantViolation(Vec<Violation>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One anisotropic splat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrimitive {
    pub position: [f32; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub rotation: [f32; 4],
    /// Positive semi-axis lengths in scene units.
    pub scale: [f32; 3],
    pub opacity: f32,
    pub color: [f32; 3],
    pub latent: Vec<f32>,
}

impl GaussianPrimitive {
    /// Axis-aligned primitive with identity rotation.
    pub fn axis_aligned(position: [f32; 3], scale: [f32; 3], opacity: f32, color: [f32; 3], latent_dim: usize) -> Self {
        Self {
            position,
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale,
            opacity,
            color,
            latent: vec![0.0; latent_dim],
        }
    }

    /// Row-major 3x3 rotation matrix of the (normalized) quaternion.
    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.rotation.map(f64::from);
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// World-frame direction of the shortest semi-axis.
    pub fn shortest_axis(&self) -> [f64; 3] {
        let k = (0..3)
            .min_by(|&a, &b| self.scale[a].total_cmp(&self.scale[b]))
            .unwrap_or(2);
        let r = self.rotation_matrix();
        [r[0][k], r[1][k], r[2][k]]
    }

    /// Top-down 2x2 covariance `[sxx, sxy, syy]` of the orthographic footprint.
    pub fn projected_covariance(&self) -> [f64; 3] {
        let r = self.rotation_matrix();
        let s = self.scale.map(|v| f64::from(v) * f64::from(v));
        let mut cov = [0.0; 3];
        for k in 0..3 {
            cov[0] += r[0][k] * r[0][k] * s[k];
            cov[1] += r[0][k] * r[1][k] * s[k];
            cov[2] += r[1][k] * r[1][k] * s[k];
        }
        cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f32; 3],
    pub max: [f32; 3],
}

impl Aabb {
    pub fn empty() -> Self {
        Self { min: [f32::INFINITY; 3], max: [f32::NEG_INFINITY; 3] }
    }

    pub fn grow(&mut self, p: [f32; 3]) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn contains(&self, p: [f32; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn diameter(&self) -> f64 {
        (0..3)
            .map(|k| f64::from(self.max[k] - self.min[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneHeader {
    pub latent_dim: usize,
    pub bounds: Aabb,
    pub node_count: usize,
    pub version: u32,
    /// Always `"+z"`.
    pub up_axis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<GeoTransform>,
}

/// Coarse-to-fine forest of Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTree {
    pub header: SceneHeader,
    pub nodes: Vec<GaussianPrimitive>,
    pub parent: Vec<Option<u32>>,
    pub children: Vec<Vec<u32>>,
    pub level: Vec<u16>,
}

impl SceneTree {
    /// Assemble a tree from flat arrays; children lists and bounds are derived.
    ///
    /// The result is not validated; call [`validate_tree`] or use
    /// [`SceneTree::build`] for a checked construction.
    pub fn from_parts(latent_dim: usize, nodes: Vec<GaussianPrimitive>, parent: Vec<Option<u32>>, level: Vec<u16>) -> Self {
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if (p as usize) < n {
                    children[p as usize].push(i as u32);
                }
            }
        }
        let mut bounds = Aabb::empty();
        for g in &nodes {
            bounds.grow(g.position);
        }
        Self {
            header: SceneHeader {
                latent_dim,
                bounds,
                node_count: n,
                version: CONTAINER_VERSION,
                up_axis: "+z".into(),
                transform: None,
            },
            nodes,
            parent,
            children,
            level,
        }
    }

    /// Like [`SceneTree::from_parts`] but rejects trees that fail validation.
    pub fn build(latent_dim: usize, nodes: Vec<GaussianPrimitive>, parent: Vec<Option<u32>>, level: Vec<u16>) -> Result<Self, SceneError> {
        let tree = Self::from_parts(latent_dim, nodes, parent, level);
        let report = validate_tree(&tree);
        if report.is_empty() {
            Ok(tree)
        } else {
            Err(SceneError::InvariantViolation(report))
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.parent.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(i, _)| i)
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_leaf(i))
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn depth(&self) -> usize {
        self.level.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    pub fn transform(&self) -> Option<&GeoTransform> {
        self.header.transform.as_ref()
    }

    pub fn set_transform(&mut self, t: Option<GeoTransform>) {
        self.header.transform = t;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonPositiveScale,
    QuaternionNotUnit,
    OpacityOutOfRange,
    ColorOutOfRange,
    NonFinite,
    LatentLength,
    ParentOutOfRange,
    LevelMismatch,
    RootLevelNonZero,
    ChildrenInconsistent,
    Cycle,
    Unreachable,
    NoLeaves,
    NodeCountMismatch,
    ArrayLengthMismatch,
    OutOfBounds,
}

/// One failed invariant. `node` is `None` for whole-tree violations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: Option<usize>,
    pub kind: ViolationKind,
    pub field: &'static str,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.node {
            Some(n) => write!(f, "node {n}: {:?} ({})", self.kind, self.field),
            None => write!(f, "tree: {:?} ({})", self.kind, self.field),
        }
    }
}

/// Check every tree and primitive invariant. An empty report means the tree is valid.
pub fn validate_tree(tree: &SceneTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = tree.nodes.len();
    let mut push = |node: Option<usize>, kind, field| out.push(Violation { node, kind, field });

    if tree.header.node_count != n {
        push(None, ViolationKind::NodeCountMismatch, "node_count");
    }
    if tree.parent.len() != n || tree.level.len() != n || tree.children.len() != n {
        push(None, ViolationKind::ArrayLengthMismatch, "parent/level/children");
        return out;
    }

    for (i, g) in tree.nodes.iter().enumerate() {
        let finite = g.position.iter().chain(&g.rotation).chain(&g.scale).chain(&g.color).chain(&g.latent).all(|v| v.is_finite())
            && g.opacity.is_finite();
        if !finite {
            push(Some(i), ViolationKind::NonFinite, "values");
            continue;
        }
        if g.scale.iter().any(|&s| s <= 0.0) {
            push(Some(i), ViolationKind::NonPositiveScale, "scale");
        }
        let qn = g.rotation.iter().map(|&q| f64::from(q).powi(2)).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            push(Some(i), ViolationKind::QuaternionNotUnit, "rotation");
        }
        if !(0.0..=1.0).contains(&g.opacity) {
            push(Some(i), ViolationKind::OpacityOutOfRange, "opacity");
        }
        if g.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            push(Some(i), ViolationKind::ColorOutOfRange, "color");
        }
        if g.latent.len() != tree.header.latent_dim {
            push(Some(i), ViolationKind::LatentLength, "latent");
        }
        if !tree.header.bounds.contains(g.position) {
            push(Some(i), ViolationKind::OutOfBounds, "position");
        }
    }

    let mut parent_ok = vec![true; n];
    for i in 0..n {
        match tree.parent[i] {
            None => {
                if tree.level[i] != 0 {
                    push(Some(i), ViolationKind::RootLevelNonZero, "level");
                }
            }
            Some(p) if p as usize >= n || p as usize == i => {
                parent_ok[i] = false;
                push(Some(i), ViolationKind::ParentOutOfRange, "parent");
            }
            Some(p) => {
                if u32::from(tree.level[i]) != u32::from(tree.level[p as usize]) + 1 {
                    push(Some(i), ViolationKind::LevelMismatch, "level");
                }
                if !tree.children[p as usize].contains(&(i as u32)) {
                    push(Some(i), ViolationKind::ChildrenInconsistent, "children");
                }
            }
        }
        for &c in &tree.children[i] {
            if c as usize >= n || tree.parent[c as usize] != Some(i as u32) {
                push(Some(i), ViolationKind::ChildrenInconsistent, "children");
            }
        }
    }

    // Walk parent pointers with three-colour marking: 0 unvisited, 1 on path, 2 done.
    let mut state = vec![0u8; n];
    let mut in_cycle = vec![false; n];
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            if state[cur] == 1 {
                let pos = path.iter().position(|&p| p == cur).unwrap_or(0);
                for &c in &path[pos..] {
                    in_cycle[c] = true;
                }
                break;
            }
            if state[cur] == 2 {
                break;
            }
            state[cur] = 1;
            path.push(cur);
            match tree.parent[cur] {
                Some(p) if parent_ok[cur] => cur = p as usize,
                _ => break,
            }
        }
        for &c in &path {
            state[c] = 2;
        }
    }
    for (i, &c) in in_cycle.iter().enumerate() {
        if c {
            push(Some(i), ViolationKind::Cycle, "parent");
        }
    }

    let mut reached = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| tree.parent[i].is_none()).collect();
    while let Some(i) = stack.pop() {
        if reached[i] {
            continue;
        }
        reached[i] = true;
        for &c in &tree.children[i] {
            if (c as usize) < n && tree.parent[c as usize] == Some(i as u32) {
                stack.push(c as usize);
            }
        }
    }
    for (i, r) in reached.iter().enumerate() {
        if !r && !in_cycle[i] {
            push(Some(i), ViolationKind::Unreachable, "parent");
        }
    }

    if n == 0 || !(0..n).any(|i| tree.children[i].is_empty() && reached[i]) {
        push(None, ViolationKind::NoLeaves, "children");
    }
    out
}
