//! Level-of-detail selection and orthographic top-down compositing.

mod export;

pub use export::{write_raster_f32, RasterSidecar};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::SceneTree;

/// Default pixel budget, 4096 x 4096.
pub const DEFAULT_PIXEL_BUDGET: usize = 4096 * 4096;

/// Screen-space low-pass added to every projected covariance, in px^2.
/// Off by default; the footprint kernel alone shapes each splat.
pub const LOW_PASS_PX2: f64 = 0.0;

const BAND_ROWS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("view of {pixels} pixels exceeds budget of {budget}")]
    PixelBudgetExceeded { pixels: usize, budget: usize },
    #[error("invalid view: {0}")]
    InvalidView(String),
}

/// Orthographic north-up raster grid over the scene ground plane.
///
/// `origin` is the scene coordinate of the north-west corner of pixel (0, 0).
/// Columns grow east (+x) and rows grow south (-y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopDownView {
    pub origin: [f64; 2],
    #[serde(rename = "w")]
    pub width: usize,
    #[serde(rename = "h")]
    pub height: usize,
    /// Scene units per pixel.
    #[serde(rename = "res")]
    pub resolution: f64,
}

impl TopDownView {
    pub fn new(origin: [f64; 2], width: usize, height: usize, resolution: f64) -> Result<Self, RenderError> {
        let v = Self { origin, width, height, resolution };
        v.check()?;
        Ok(v)
    }

    pub fn check(&self) -> Result<(), RenderError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(RenderError::InvalidView("resolution must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidView("width and height must be positive".into()));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(RenderError::InvalidView("origin must be finite".into()));
        }
        Ok(())
    }

    /// View covering the x/y bounds of a scene, padded by `pad` scene units.
    pub fn covering(tree: &SceneTree, resolution: f64, pad: f64) -> Result<Self, RenderError> {
        let b = tree.header.bounds;
        let x0 = f64::from(b.min[0]) - pad;
        let y1 = f64::from(b.max[1]) + pad;
        let w = ((f64::from(b.max[0]) + pad - x0) / resolution).ceil().max(1.0) as usize;
        let h = ((y1 - (f64::from(b.min[1]) - pad)) / resolution).ceil().max(1.0) as usize;
        Self::new([x0, y1], w, h, resolution)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Scene coordinate of a pixel centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] - (row as f64 + 0.5) * self.resolution,
        ]
    }

    /// Continuous (col, row) coordinates of a scene point; pixel centres sit at +0.5.
    pub fn to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.origin[0]) / self.resolution, (self.origin[1] - p[1]) / self.resolution]
    }

    /// Pixel containing a scene point, if inside the grid.
    pub fn pixel_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let [c, r] = self.to_pixel(p);
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (c, r) = (c.floor() as usize, r.floor() as usize);
        (c < self.width && r < self.height).then_some((r, c))
    }

    /// Inverse of [`TopDownView::to_pixel`].
    pub fn from_pixel(&self, px: [f64; 2]) -> [f64; 2] {
        [self.origin[0] + px[0] * self.resolution, self.origin[1] - px[1] * self.resolution]
    }

    /// Sub-view covering pixel rows/cols `[r0, r1) x [c0, c1)` at another resolution.
    pub fn crop(&self, r0: usize, c0: usize, r1: usize, c1: usize, resolution: f64) -> Result<Self, RenderError> {
        let origin = self.from_pixel([c0 as f64, r0 as f64]);
        let w = (((c1 - c0) as f64 * self.resolution) / resolution).round().max(1.0) as usize;
        let h = (((r1 - r0) as f64 * self.resolution) / resolution).round().max(1.0) as usize;
        Self::new(origin, w, h, resolution)
    }
}

/// Projected diameter in pixels used by the LOD rule.
pub fn projected_diameter_px(tree: &SceneTree, node: usize, view: &TopDownView) -> f64 {
    let s = tree.nodes[node].scale;
    2.0 * f64::from(s[0].max(s[1])) / view.resolution
}

/// Coarsest antichain in which every node projects to at most one pixel or is a leaf.
pub fn select_lod_cut(tree: &SceneTree, view: &TopDownView) -> Vec<usize> {
    let mut cut = Vec::new();
    let mut stack: Vec<usize> = tree.roots().collect();
    stack.reverse();
    while let Some(i) = stack.pop() {
        if tree.is_leaf(i) || projected_diameter_px(tree, i, view) <= 1.0 {
            cut.push(i);
        } else {
            stack.extend(tree.children[i].iter().rev().map(|&c| c as usize));
        }
    }
    cut.sort_unstable();
    cut
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenderStats {
    pub cut_size: usize,
    /// Cut nodes whose footprint intersects the view.
    pub splatted: usize,
}

/// Composited rasters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderProduct {
    pub view: TopDownView,
    pub latent_dim: usize,
    pub rgb: Vec<f32>,
    pub feature: Vec<f32>,
    pub alpha: Vec<f32>,
    /// Top-surface elevation in scene units; NaN where alpha is zero.
    pub height: Vec<f32>,
    pub stats: RenderStats,
}

impl RenderProduct {
    pub fn feature_at(&self, idx: usize) -> &[f32] {
        &self.feature[idx * self.latent_dim..(idx + 1) * self.latent_dim]
    }

    pub fn rgb_at(&self, idx: usize) -> [f32; 3] {
        [self.rgb[3 * idx], self.rgb[3 * idx + 1], self.rgb[3 * idx + 2]]
    }

    /// Bit-level equality, treating NaN heights as equal.
    pub fn bit_eq(&self, other: &Self) -> bool {
        let eq = |a: &[f32], b: &[f32]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.view == other.view
            && eq(&self.rgb, &other.rgb)
            && eq(&self.feature, &other.feature)
            && eq(&self.alpha, &other.alpha)
            && eq(&self.height, &other.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub pixel_budget: usize,
    pub low_pass_px2: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { pixel_budget: DEFAULT_PIXEL_BUDGET, low_pass_px2: LOW_PASS_PX2 }
    }
}

struct Splat {
    node: usize,
    z: f64,
    center: [f64; 2],
    // inverse covariance in (col, row) pixel space
    inv: [f64; 3],
    rows: (usize, usize),
    cols: (usize, usize),
    opacity: f64,
}

impl Splat {
    #[inline]
    fn weight(&self, row: usize, col: usize) -> f64 {
        let dx = col as f64 + 0.5 - self.center[0];
        let dy = row as f64 + 0.5 - self.center[1];
        let d2 = self.inv[0] * dx * dx + 2.0 * self.inv[1] * dx * dy + self.inv[2] * dy * dy;
        if d2 > 9.0 {
            0.0
        } else {
            self.opacity * (-0.5 * d2).exp()
        }
    }
}

fn build_splat(tree: &SceneTree, node: usize, view: &TopDownView, low_pass: f64) -> Option<Splat> {
    let g = &tree.nodes[node];
    let [sxx, sxy, syy] = g.projected_covariance();
    let r2 = view.resolution * view.resolution;
    // rows grow toward -y, so the off-diagonal flips sign
    let (a, b, c) = (sxx / r2 + low_pass, -sxy / r2, syy / r2 + low_pass);
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let inv = [c / det, -b / det, a / det];
    let center = view.to_pixel([f64::from(g.position[0]), f64::from(g.position[1])]);
    let (ex, ey) = (3.0 * a.sqrt(), 3.0 * c.sqrt());
    let clamp = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let lo = (lo - 0.5).ceil().max(0.0);
        let hi = ((hi - 0.5).floor() + 1.0).min(n as f64);
        (hi > lo).then_some((lo as usize, hi as usize))
    };
    let cols = clamp(center[0] - ex, center[0] + ex, view.width)?;
    let rows = clamp(center[1] - ey, center[1] + ey, view.height)?;
    Some(Splat { node, z: f64::from(g.position[2]), center, inv, rows, cols, opacity: f64::from(g.opacity) })
}

/// Front-to-back composite of the LOD cut onto a top-down grid.
///
/// Per pixel, cut nodes are ordered by descending elevation (ties by node
/// index) and blended with `w_i = o_i g_i prod_{j<i} (1 - o_j g_j)`.
pub fn render_topdown(tree: &SceneTree, view: &TopDownView) -> Result<RenderProduct, RenderError> {
    render_topdown_with(tree, view, &RenderOptions::default())
}

pub fn render_topdown_with(tree: &SceneTree, view: &TopDownView, opts: &RenderOptions) -> Result<RenderProduct, RenderError> {
    view.check()?;
    let pixels = view.pixel_count();
    if pixels > opts.pixel_budget {
        return Err(RenderError::PixelBudgetExceeded { pixels, budget: opts.pixel_budget });
    }
    let cut = select_lod_cut(tree, view);
    let mut splats: Vec<Splat> = cut.iter().filter_map(|&i| build_splat(tree, i, view, opts.low_pass_px2)).collect();
    splats.sort_by(|a, b| b.z.total_cmp(&a.z).then(a.node.cmp(&b.node)));
    let stats = RenderStats { cut_size: cut.len(), splatted: splats.len() };

    let bands = view.height.div_ceil(BAND_ROWS);
    let mut binned: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (k, s) in splats.iter().enumerate() {
        for band in s.rows.0 / BAND_ROWS..=(s.rows.1 - 1) / BAND_ROWS {
            binned[band].push(k as u32);
        }
    }

    let l = tree.header.latent_dim;
    let w = view.width;
    let mut rgb = vec![0f32; 3 * pixels];
    let mut feature = vec![0f32; l * pixels];
    let mut alpha = vec![0f32; pixels];
    let mut height = vec![f32::NAN; pixels];

    let band_px = BAND_ROWS * w;
    rgb.par_chunks_mut(3 * band_px)
        .zip(feature.par_chunks_mut(l.max(1) * band_px))
        .zip(alpha.par_chunks_mut(band_px))
        .zip(height.par_chunks_mut(band_px))
        .enumerate()
        .for_each(|(band, (((rgb, feat), alpha), height))| {
            let r0 = band * BAND_ROWS;
            let rows = alpha.len() / w;
            let mut trans = vec![1f64; rows * w];
            let mut acc_rgb = vec![0f64; 3 * rows * w];
            let mut acc_feat = vec![0f64; l * rows * w];
            for &k in &binned[band] {
                let s = &splats[k as usize];
                let g = &tree.nodes[s.node];
                for row in s.rows.0.max(r0)..s.rows.1.min(r0 + rows) {
                    for col in s.cols.0..s.cols.1 {
                        let a = s.weight(row, col);
                        if a <= 0.0 {
                            continue;
                        }
                        let p = (row - r0) * w + col;
                        let wi = a * trans[p];
                        trans[p] *= 1.0 - a;
                        for c in 0..3 {
                            acc_rgb[3 * p + c] += wi * f64::from(g.color[c]);
                        }
                        for (acc, &v) in acc_feat[l * p..l * (p + 1)].iter_mut().zip(&g.latent) {
                            *acc += wi * f64::from(v);
                        }
                    }
                }
            }
            for p in 0..rows * w {
                alpha[p] = (1.0 - trans[p]) as f32;
                for c in 0..3 {
                    rgb[3 * p + c] = acc_rgb[3 * p + c] as f32;
                }
                for k in 0..l {
                    feat[l * p + k] = acc_feat[l * p + k] as f32;
                }
            }
            // Second pass: first node at which accumulated alpha reaches half the final alpha.
            let target: Vec<f64> = trans.iter().map(|t| 0.5 * (1.0 - t)).collect();
            trans.iter_mut().for_each(|t| *t = 1.0);
            for &k in &binned[band] {
                let s = &splats[k as usize];
                for row in s.rows.0.max(r0)..s.rows.1.min(r0 + rows) {
                    for col in s.cols.0..s.cols.1 {
                        let p = (row - r0) * w + col;
                        if !height[p].is_nan() {
                            continue;
                        }
                        let a = s.weight(row, col);
                        if a <= 0.0 {
                            continue;
                        }
                        trans[p] *= 1.0 - a;
                        if 1.0 - trans[p] >= target[p] * (1.0 - 1e-12) {
                            height[p] = s.z as f32;
                        }
                    }
                }
            }
        });

    Ok(RenderProduct { view: *view, latent_dim: l, rgb, feature, alpha, height, stats })
}
