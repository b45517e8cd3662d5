//! Geographic vision operations over rendered rasters, the landmark registry
//! and the Gaussian scene.

pub mod morph;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{relevancy_map, threshold_segment, FieldError, LatentCodec, DEFAULT_TAU};
use crate::georef::GeoTransform;
use crate::imageio::{self, ImageError};
use crate::providers::{Detector, EmbeddingProvider, ProviderError};
use crate::registry::{rasterize_polygon, Registry, RegistryError};
use crate::render::{render_topdown, RenderError, RenderProduct, TopDownView};
use crate::scene::SceneTree;
use crate::segment::{Segment, SegmentFlag};

#[derive(Debug, Error)]
pub enum GvError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("area is empty")]
    EmptyArea,
    #[error("input segment is empty")]
    EmptyInput,
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("view is not north aligned (rotation {0:.4} rad)")]
    ViewNotNorthAligned(f64),
    #[error("segments are on different grids")]
    GridMismatch,
    #[error("no flat Gaussians under the area")]
    NoFlatGaussians,
    #[error("invalid direction {0:?}")]
    InvalidDirection(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistMode {
    #[default]
    Centroid,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GvConfig {
    pub tau: f64,
    /// Half-angle of the cone around +z within which a Gaussian's shortest axis counts as flat.
    pub flat_cone_deg: f64,
    pub ground_percentile: f64,
    pub top_percentile: f64,
    /// Ground-search dilation around the height area, meters.
    pub ground_dilation_m: f64,
    /// Scene units per pixel for detector renders; defaults to the view resolution.
    pub detail_res: Option<f64>,
    pub dist_mode: DistMode,
    /// Largest view rotation (radians) still treated as north-up.
    pub north_tolerance: f64,
}

impl Default for GvConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            flat_cone_deg: 30.0,
            ground_percentile: 5.0,
            top_percentile: 95.0,
            ground_dilation_m: 10.0,
            detail_res: None,
            dist_mode: DistMode::Centroid,
            north_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compass {
    N,
    S,
    E,
    W,
    NE,
    NW,
    SE,
    SW,
}

impl Compass {
    pub const ALL: [Compass; 8] = [Self::N, Self::S, Self::E, Self::W, Self::NE, Self::NW, Self::SE, Self::SW];

    fn cardinals(self) -> &'static [Compass] {
        match self {
            Self::N => &[Self::N],
            Self::S => &[Self::S],
            Self::E => &[Self::E],
            Self::W => &[Self::W],
            Self::NE => &[Self::N, Self::E],
            Self::NW => &[Self::N, Self::W],
            Self::SE => &[Self::S, Self::E],
            Self::SW => &[Self::S, Self::W],
        }
    }
}

impl FromStr for Compass {
    type Err = GvError;

    /// Accepts abbreviations and words, e.g. `N`, `north`, `NE`, `north-east`, `northeast`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect();
        Ok(match key.as_str() {
            "n" | "north" => Self::N,
            "s" | "south" => Self::S,
            "e" | "east" => Self::E,
            "w" | "west" => Self::W,
            "ne" | "northeast" => Self::NE,
            "nw" | "northwest" => Self::NW,
            "se" | "southeast" => Self::SE,
            "sw" | "southwest" => Self::SW,
            _ => return Err(GvError::InvalidDirection(s.to_string())),
        })
    }
}

impl fmt::Display for Compass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Detector boxes mapped onto the view grid, `[x0, y0, x1, y1]` in continuous
/// (col, row) pixel coordinates, sorted by descending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub view: TopDownView,
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<f64>,
    pub labels: Vec<String>,
}

impl DetectionSet {
    pub fn empty(view: TopDownView) -> Self {
        Self { view, boxes: Vec::new(), scores: Vec::new(), labels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Box centres in scene coordinates.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.boxes.iter().map(|b| self.view.from_pixel([(b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0])).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LeafSample {
    xy: [f64; 2],
    z: f64,
    flat: bool,
}

/// Everything a program needs: scene, registry, georeference, active view,
/// providers and tunables. Shared read-only across concurrent executions.
pub struct GeoContext {
    pub scene: Arc<SceneTree>,
    pub registry: Arc<Registry>,
    pub transform: GeoTransform,
    pub view: TopDownView,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub detector: Arc<dyn Detector>,
    pub codec: LatentCodec,
    pub config: GvConfig,
    render: Mutex<Option<Arc<RenderProduct>>>,
    leaves: OnceLock<Vec<LeafSample>>,
}

impl GeoContext {
    pub fn new(
        scene: Arc<SceneTree>,
        registry: Arc<Registry>,
        transform: GeoTransform,
        view: TopDownView,
        embedder: Arc<dyn EmbeddingProvider>,
        detector: Arc<dyn Detector>,
    ) -> Self {
        let codec = LatentCodec::identity(scene.header.latent_dim);
        Self {
            scene,
            registry,
            transform,
            view,
            embedder,
            detector,
            codec,
            config: GvConfig::default(),
            render: Mutex::new(None),
            leaves: OnceLock::new(),
        }
    }

    pub fn with_codec(mut self, codec: LatentCodec) -> Self {
        self.codec = codec;
        self
    }

    pub fn with_config(mut self, config: GvConfig) -> Self {
        self.config = config;
        self
    }

    /// World meters per pixel of the active view.
    pub fn meters_per_pixel(&self) -> f64 {
        self.view.resolution * self.transform.scale()
    }

    /// Top-down render of the active view, computed once.
    pub fn render(&self) -> Result<Arc<RenderProduct>, GvError> {
        if let Some(r) = self.render.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
            return Ok(r.clone());
        }
        // Render without holding the lock: the renderer runs on rayon, and a
        // worker parked on this mutex could own a job the render waits for.
        // Concurrent callers may render twice; the first result is kept.
        let r = Arc::new(render_topdown(&self.scene, &self.view)?);
        let mut slot = self.render.lock().unwrap_or_else(|e| e.into_inner());
        Ok(slot.get_or_insert(r).clone())
    }

    fn leaf_samples(&self) -> &[LeafSample] {
        self.leaves.get_or_init(|| {
            let cos = self.config.flat_cone_deg.to_radians().cos();
            self.scene
                .leaves()
                .map(|i| {
                    let g = &self.scene.nodes[i];
                    LeafSample {
                        xy: [f64::from(g.position[0]), f64::from(g.position[1])],
                        z: f64::from(g.position[2]),
                        flat: g.shortest_axis()[2].abs() >= cos,
                    }
                })
                .collect()
        })
    }

    fn check_grid(&self, s: &Segment) -> Result<(), GvError> {
        if s.view != self.view {
            return Err(GvError::GridMismatch);
        }
        Ok(())
    }

    fn area_or_whole(&self, area: Option<&Segment>) -> Result<Segment, GvError> {
        match area {
            Some(a) => {
                self.check_grid(a)?;
                if a.is_empty() {
                    return Err(GvError::EmptyArea);
                }
                Ok(a.clone())
            }
            None => Ok(Segment::whole(self.view)),
        }
    }

    fn non_empty(&self, s: &Segment) -> Result<(), GvError> {
        self.check_grid(s)?;
        if s.is_empty() {
            return Err(GvError::EmptyInput);
        }
        Ok(())
    }

    pub fn get_landmark_seg(&self, query: &str) -> Result<Segment, GvError> {
        let lm = self.registry.lookup_landmark(query)?;
        let mut s = rasterize_polygon(lm, &self.view, &self.transform);
        s.provenance.op = "GetLandmarkSeg".into();
        let ones = vec![1.0; s.mask.len()];
        Ok(s.with_confidence(ones))
    }

    pub fn get_structure_seg(&self, query: &str, area: Option<&Segment>) -> Result<Segment, GvError> {
        let area = self.area_or_whole(area)?;
        let render = self.render()?;
        let map = relevancy_map(&render, query, self.embedder.as_ref(), &self.codec)?;
        let mut s = threshold_segment(&map, Some(&area), self.config.tau)?;
        s.provenance.op = "GetStructureSeg".into();
        Ok(s)
    }

    /// Ring of pixels within `distance` meters of the area, excluding the area.
    pub fn seg_around(&self, area: &Segment, distance: f64) -> Result<Segment, GvError> {
        if !(distance > 0.0) {
            return Err(GvError::NonPositiveDistance(distance));
        }
        self.non_empty(area)?;
        let radius = distance / self.meters_per_pixel();
        if radius < 1.0 {
            return Ok(Segment::empty(self.view, "SegAround", SegmentFlag::EmptyRing));
        }
        let grown = morph::dilate(&area.mask, self.view.width, self.view.height, radius);
        let ring = grown.iter().zip(&area.mask).map(|(&g, &m)| g && !m).collect();
        Ok(Segment::new(self.view, ring, "SegAround"))
    }

    /// Pixels strictly beyond the segment's bounding box on the given side(s).
    pub fn seg_direction(&self, seg: &Segment, dir: Compass) -> Result<Segment, GvError> {
        self.non_empty(seg)?;
        if !self.transform.is_north_aligned(self.config.north_tolerance) {
            return Err(GvError::ViewNotNorthAligned(self.transform.rotation()));
        }
        let b = seg.bbox().expect("non-empty");
        let (w, h) = (self.view.width, self.view.height);
        let mut mask = vec![true; w * h];
        for &c in dir.cardinals() {
            for (i, m) in mask.iter_mut().enumerate() {
                let (row, col) = (i / w, i % w);
                *m &= match c {
                    Compass::N => row < b.r0,
                    Compass::S => row > b.r1,
                    Compass::E => col > b.c1,
                    Compass::W => col < b.c0,
                    _ => unreachable!("cardinals only"),
                };
            }
        }
        Ok(Segment::new(self.view, mask, "SegDirection"))
    }

    /// Convex hull of both segments minus the segments themselves.
    pub fn seg_between(&self, a: &Segment, b: &Segment) -> Result<Segment, GvError> {
        self.non_empty(a)?;
        self.non_empty(b)?;
        let (w, h) = (self.view.width, self.view.height);
        let union: Vec<bool> = a.mask.iter().zip(&b.mask).map(|(&x, &y)| x || y).collect();
        let hull = morph::hull_fill(&union, w, h);
        let mask = hull.iter().zip(&union).map(|(&hh, &u)| hh && !u).collect();
        Ok(Segment::new(self.view, mask, "SegBetween"))
    }

    pub fn largest_seg(&self, seg: &Segment) -> Result<Segment, GvError> {
        self.non_empty(seg)?;
        let mask = morph::largest_component(&seg.mask, self.view.width, self.view.height);
        let mut out = Segment::new(self.view, mask, "LargestSeg");
        if let Some(c) = &seg.confidence {
            out = out.with_confidence(c.clone());
        }
        Ok(out)
    }

    /// Distance in world meters; centroid-to-centroid by default.
    pub fn measure_dist(&self, a: &Segment, b: &Segment) -> Result<f64, GvError> {
        self.non_empty(a)?;
        self.non_empty(b)?;
        match self.config.dist_mode {
            DistMode::Centroid => {
                let pa = self.transform.to_world(a.centroid_scene().expect("non-empty"));
                let pb = self.transform.to_world(b.centroid_scene().expect("non-empty"));
                Ok(((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt())
            }
            DistMode::Boundary => {
                let d2 = morph::edt_squared(&b.mask, self.view.width, self.view.height);
                let min = a.mask.iter().zip(&d2).filter(|(&m, _)| m).map(|(_, &d)| d).fold(f64::INFINITY, f64::min);
                Ok(min.sqrt() * self.meters_per_pixel())
            }
        }
    }

    /// Height of the area's top surface above the surrounding ground, meters.
    pub fn measure_height(&self, area: &Segment) -> Result<f64, GvError> {
        self.non_empty(area)?;
        let (w, h) = (self.view.width, self.view.height);
        let radius = self.config.ground_dilation_m / self.meters_per_pixel();
        let around = morph::dilate(&area.mask, w, h, radius);
        let (mut top, mut ground) = (Vec::new(), Vec::new());
        for s in self.leaf_samples().iter().filter(|s| s.flat) {
            if let Some((r, c)) = self.view.pixel_of(s.xy) {
                let i = r * w + c;
                if area.mask[i] {
                    top.push(s.z);
                }
                if around[i] {
                    ground.push(s.z);
                }
            }
        }
        if top.is_empty() {
            return Err(GvError::NoFlatGaussians);
        }
        let t = percentile(&mut top, self.config.top_percentile);
        let g = percentile(&mut ground, self.config.ground_percentile);
        Ok((t - g) * self.transform.scale())
    }

    /// Detector boxes for `query` whose centres fall inside the area.
    pub fn get_object_seg(&self, query: &str, area: Option<&Segment>) -> Result<DetectionSet, GvError> {
        let area = self.area_or_whole(area)?;
        let b = area.bbox().expect("non-empty");
        let res = self.config.detail_res.unwrap_or(self.view.resolution);
        let crop = self.view.crop(b.r0, b.c0, b.r1 + 1, b.c1 + 1, res)?;
        let rgb = render_topdown(&self.scene, &crop)?;
        let png = imageio::encode_rgb(crop.width, crop.height, &rgb.rgb)?;
        let found = self.detector.detect(&png, query)?;

        let (vw, vh) = (self.view.width as f64, self.view.height as f64);
        let to_view = |x: f64, y: f64| self.view.to_pixel(crop.from_pixel([x, y]));
        let mut out = DetectionSet::empty(self.view);
        for (bx, &score) in found.boxes.iter().zip(&found.scores) {
            let p0 = to_view(bx[0], bx[1]);
            let p1 = to_view(bx[2], bx[3]);
            let (x0, x1) = (p0[0].min(p1[0]).max(0.0), p0[0].max(p1[0]).min(vw));
            let (y0, y1) = (p0[1].min(p1[1]).max(0.0), p0[1].max(p1[1]).min(vh));
            if !(x0 < x1 && y0 < y1) {
                continue;
            }
            let centre = self.view.from_pixel([(x0 + x1) / 2.0, (y0 + y1) / 2.0]);
            let inside = self.view.pixel_of(centre).is_some_and(|(r, c)| area.get(r, c));
            if inside {
                out.boxes.push([x0, y0, x1, y1]);
                out.scores.push(score);
                out.labels.push(query.to_string());
            }
        }
        Ok(out)
    }
}

/// Linear-interpolated percentile (0..=100); sorts in place.
pub fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests;
