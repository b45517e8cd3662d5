//! Language features on the Gaussian tree and per-pixel relevancy maps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{self, ImageError};
use crate::providers::{EmbeddingProvider, ProviderError};
use crate::render::{RenderProduct, TopDownView};
use crate::scene::SceneTree;
use crate::segment::{Segment, SegmentFlag};

/// Default relevancy threshold on min-max normalized maps.
pub const DEFAULT_TAU: f64 = 0.5;

/// Cosine spread below which a map counts as constant.
pub const FLAT_SPAN: f32 = 1e-6;

/// Fraction of area pixels kept when thresholding selects nothing.
pub const FALLBACK_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("node {0} has no label")]
    MissingLabel(usize),
    #[error("label count {labels} does not match node count {nodes}")]
    LabelCount { labels: usize, nodes: usize },
    #[error("latent dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid mismatch between confidence map and area")]
    GridMismatch,
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("malformed codec: {0}")]
    MalformedCodec(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Maps full embeddings (width E) to latent features (width L) and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LatentCodec {
    Identity { dim: usize },
    /// `encode` is L x E and `decode` is E x L, both row-major.
    Linear { full_dim: usize, latent_dim: usize, encode: Vec<f32>, decode: Vec<f32> },
}

impl LatentCodec {
    pub fn identity(dim: usize) -> Self {
        Self::Identity { dim }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(path).map_err(|e| FieldError::MalformedCodec(e.to_string()))?;
        let codec: Self = serde_json::from_str(&text).map_err(|e| FieldError::MalformedCodec(e.to_string()))?;
        if let Self::Linear { full_dim, latent_dim, encode, decode } = &codec {
            if encode.len() != full_dim * latent_dim || decode.len() != full_dim * latent_dim {
                return Err(FieldError::MalformedCodec("matrix sizes do not match dimensions".into()));
            }
        }
        Ok(codec)
    }

    pub fn full_dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Linear { full_dim, .. } => *full_dim,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Linear { latent_dim, .. } => *latent_dim,
        }
    }

    pub fn encode(&self, x: &[f32]) -> Vec<f32> {
        match self {
            Self::Identity { .. } => x.to_vec(),
            Self::Linear { full_dim, latent_dim, encode, .. } => matvec(encode, *latent_dim, *full_dim, x),
        }
    }

    pub fn decode(&self, z: &[f32]) -> Vec<f32> {
        match self {
            Self::Identity { .. } => z.to_vec(),
            Self::Linear { full_dim, latent_dim, decode, .. } => matvec(decode, *full_dim, *latent_dim, z),
        }
    }
}

fn matvec(m: &[f32], rows: usize, cols: usize, x: &[f32]) -> Vec<f32> {
    (0..rows).map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Class per node after plurality inheritance: leaves keep their label, each
/// internal node takes the most frequent leaf class below it (ties to the
/// lexicographically smallest name).
pub fn inherit_labels(tree: &SceneTree, labels: &[String]) -> Result<Vec<String>, FieldError> {
    if labels.len() != tree.len() {
        return Err(FieldError::LabelCount { labels: labels.len(), nodes: tree.len() });
    }
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(tree.level[i]));
    let mut counts: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); tree.len()];
    for &i in &order {
        if tree.is_leaf(i) {
            if labels[i].is_empty() {
                return Err(FieldError::MissingLabel(i));
            }
            counts[i].insert(labels[i].as_str(), 1);
        }
        if let Some(p) = tree.parent[i] {
            let child = std::mem::take(&mut counts[i]);
            let parent = &mut counts[p as usize];
            for (k, v) in &child {
                *parent.entry(k).or_default() += v;
            }
            counts[i] = child;
        }
    }
    Ok(counts
        .iter()
        .map(|c| {
            // BTreeMap iterates names ascending, so max_by keeps the first (smallest) on ties
            c.iter()
                .fold(None::<(&str, usize)>, |best, (&k, &v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((k, v)),
                })
                .map(|(k, _)| k.to_string())
                .unwrap_or_default()
        })
        .collect())
}

/// Assign every node the encoded embedding of its (inherited) class.
pub fn bake_features(tree: &SceneTree, labels: &[String], provider: &dyn EmbeddingProvider, codec: &LatentCodec) -> Result<SceneTree, FieldError> {
    let classes = inherit_labels(tree, labels)?;
    let mut unique: Vec<String> = classes.iter().filter(|c| !c.is_empty()).cloned().collect();
    unique.sort();
    unique.dedup();
    if let Some(vocab) = provider.vocabulary() {
        if let Some(bad) = unique.iter().find(|c| !vocab.contains(c)) {
            return Err(FieldError::UnknownClass(bad.clone()));
        }
    }
    let dim = provider.dim()?;
    if dim != codec.full_dim() {
        return Err(FieldError::DimensionMismatch { expected: codec.full_dim(), got: dim });
    }
    let vectors = provider.embed(&unique)?;
    let latents: BTreeMap<&str, Vec<f32>> = unique.iter().map(String::as_str).zip(vectors.iter().map(|v| codec.encode(v))).collect();

    let mut out = tree.clone();
    out.header.latent_dim = codec.latent_dim();
    for (node, class) in out.nodes.iter_mut().zip(&classes) {
        node.latent = latents.get(class.as_str()).cloned().ok_or_else(|| FieldError::UnknownClass(class.clone()))?;
    }
    Ok(out)
}

/// Per-pixel cosine relevancy of a text query against the composited feature raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub view: TopDownView,
    /// Raw cosine in [-1, 1]; zero on invalid pixels.
    pub raw: Vec<f32>,
    /// Pixels with non-zero coverage.
    pub valid: Vec<bool>,
}

impl ConfidenceMap {
    /// Min-max normalization over valid pixels, optionally restricted to `area`.
    /// Pixels outside the domain and constant maps (span at most [`FLAT_SPAN`],
    /// which absorbs f32 rounding of orthogonal vectors) normalize to zero.
    pub fn normalized(&self, area: Option<&[bool]>) -> Vec<f32> {
        let inside = |i: usize| self.valid[i] && area.is_none_or(|a| a[i]);
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for (i, &v) in self.raw.iter().enumerate() {
            if inside(i) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = hi - lo;
        self.raw
            .iter()
            .enumerate()
            .map(|(i, &v)| if inside(i) && span > FLAT_SPAN { (v - lo) / span } else { 0.0 })
            .collect()
    }

    pub fn min_max(&self) -> Option<(f32, f32)> {
        let vals = self.raw.iter().zip(&self.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v);
        vals.fold(None, |acc, v| Some(acc.map_or((v, v), |(lo, hi): (f32, f32)| (lo.min(v), hi.max(v)))))
    }

    /// 16-bit grayscale PNG of the normalized map plus a JSON sidecar.
    pub fn export(&self, png_path: &Path) -> Result<(), FieldError> {
        let norm = self.normalized(None);
        imageio::write_file(png_path, &imageio::encode_gray16(self.view.width, self.view.height, &norm)?)?;
        let (min, max) = self.min_max().unwrap_or((0.0, 0.0));
        let side = serde_json::json!({ "min": min, "max": max, "view": self.view });
        let mut p = png_path.as_os_str().to_owned();
        p.push(".json");
        std::fs::write(p, serde_json::to_vec_pretty(&side).expect("sidecar serializes")).map_err(ImageError::from)?;
        Ok(())
    }
}

pub fn relevancy_map(render: &RenderProduct, query: &str, provider: &dyn EmbeddingProvider, codec: &LatentCodec) -> Result<ConfidenceMap, FieldError> {
    if render.latent_dim != codec.latent_dim() {
        return Err(FieldError::DimensionMismatch { expected: codec.latent_dim(), got: render.latent_dim });
    }
    let text = provider.embed_one(query)?;
    if text.len() != codec.full_dim() {
        return Err(FieldError::DimensionMismatch { expected: codec.full_dim(), got: text.len() });
    }
    let n = render.view.pixel_count();
    let valid: Vec<bool> = render.alpha.iter().map(|&a| a > 0.0).collect();
    let raw = (0..n)
        .map(|i| if valid[i] { cosine(&text, &codec.decode(render.feature_at(i))) as f32 } else { 0.0 })
        .collect();
    Ok(ConfidenceMap { view: render.view, raw, valid })
}

/// Pixels of `area` whose normalized relevancy reaches `tau`; falls back to
/// the top 1% of the area when nothing qualifies.
pub fn threshold_segment(map: &ConfidenceMap, area: Option<&Segment>, tau: f64) -> Result<Segment, FieldError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(FieldError::InvalidTau(tau));
    }
    if let Some(a) = area {
        if a.view != map.view {
            return Err(FieldError::GridMismatch);
        }
    }
    let area_mask = area.map(|a| a.mask.as_slice());
    let norm = map.normalized(area_mask);
    let domain: Vec<usize> = (0..norm.len()).filter(|&i| map.valid[i] && area_mask.is_none_or(|a| a[i])).collect();
    let tau = tau as f32;
    let mut mask = vec![false; norm.len()];
    for &i in &domain {
        mask[i] = norm[i] >= tau;
    }
    let mut flagged = false;
    if !mask.iter().any(|&m| m) && !domain.is_empty() {
        let keep = ((domain.len() as f64 * FALLBACK_FRACTION).ceil() as usize).max(1);
        let mut ranked = domain.clone();
        ranked.sort_by(|&a, &b| norm[b].total_cmp(&norm[a]).then(a.cmp(&b)));
        for &i in &ranked[..keep] {
            mask[i] = true;
        }
        flagged = true;
    }
    let seg = Segment::new(map.view, mask, "threshold").with_confidence(norm);
    Ok(if flagged { seg.with_flag(SegmentFlag::LowConfidence) } else { seg })
}
