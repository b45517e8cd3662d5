//! Raster masks on a metric top-down grid, the value passed between geographic operations.

use serde::{Deserialize, Serialize};

use crate::imageio::{self, ImageError};
use crate::render::TopDownView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentFlag {
    /// Mask is empty for no more specific reason.
    Empty,
    /// Source polygon lies entirely outside the view.
    OutsideView,
    /// Thresholding found nothing; mask is the top-percentile fallback.
    LowConfidence,
    /// Buffer distance is below one pixel.
    EmptyRing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub op: String,
    pub flags: Vec<SegmentFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub view: TopDownView,
    pub mask: Vec<bool>,
    /// Per-pixel confidence; meaningful on mask pixels only, zero elsewhere.
    pub confidence: Option<Vec<f32>>,
    pub provenance: Provenance,
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl Segment {
    pub fn new(view: TopDownView, mask: Vec<bool>, op: &str) -> Self {
        assert_eq!(mask.len(), view.pixel_count(), "mask size must match the view");
        let mut s = Self { view, mask, confidence: None, provenance: Provenance { op: op.to_string(), flags: Vec::new() } };
        s.ensure_flagged();
        s
    }

    pub fn empty(view: TopDownView, op: &str, flag: SegmentFlag) -> Self {
        let mut s = Self::new(view, vec![false; view.pixel_count()], op);
        s.provenance.flags = vec![flag];
        s
    }

    pub fn whole(view: TopDownView) -> Self {
        Self::new(view, vec![true; view.pixel_count()], "whole_view")
    }

    pub fn with_confidence(mut self, confidence: Vec<f32>) -> Self {
        assert_eq!(confidence.len(), self.mask.len());
        let conf = confidence.into_iter().zip(&self.mask).map(|(c, &m)| if m { c } else { 0.0 }).collect();
        self.confidence = Some(conf);
        self
    }

    pub fn with_flag(mut self, flag: SegmentFlag) -> Self {
        if !self.provenance.flags.contains(&flag) {
            self.provenance.flags.push(flag);
        }
        self.provenance.flags.retain(|f| *f != SegmentFlag::Empty || flag == SegmentFlag::Empty);
        self.ensure_flagged();
        self
    }

    fn ensure_flagged(&mut self) {
        if self.is_empty() && self.provenance.flags.is_empty() {
            self.provenance.flags.push(SegmentFlag::Empty);
        }
    }

    pub fn has_flag(&self, flag: SegmentFlag) -> bool {
        self.provenance.flags.contains(&flag)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn width(&self) -> usize {
        self.view.width
    }

    pub fn height(&self) -> usize {
        self.view.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.view.width + col]
    }

    pub fn same_grid(&self, other: &Segment) -> bool {
        self.view == other.view
    }

    pub fn bbox(&self) -> Option<PixelBox> {
        let w = self.view.width;
        let mut b: Option<PixelBox> = None;
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            let (r, c) = (i / w, i % w);
            b = Some(match b {
                None => PixelBox { r0: r, c0: c, r1: r, c1: c },
                Some(b) => PixelBox { r0: b.r0.min(r), c0: b.c0.min(c), r1: b.r1.max(r), c1: b.c1.max(c) },
            });
        }
        b
    }

    /// Mean scene coordinate of mask pixel centres.
    pub fn centroid_scene(&self) -> Option<[f64; 2]> {
        let w = self.view.width;
        let (mut sc, mut sr, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            sc += (i % w) as f64 + 0.5;
            sr += (i / w) as f64 + 0.5;
            n += 1;
        }
        (n > 0).then(|| self.view.from_pixel([sc / n as f64, sr / n as f64]))
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        imageio::encode_mask(self.view.width, self.view.height, &self.mask)
    }

    /// JSON description written next to exported mask PNGs.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "view": self.view,
            "pixels": self.count(),
            "provenance": self.provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view() -> TopDownView {
        TopDownView::new([0.0, 4.0], 4, 4, 1.0).unwrap()
    }

    #[test]
    fn empty_masks_are_flagged() {
        let s = Segment::new(view(), vec![false; 16], "test");
        assert!(s.has_flag(SegmentFlag::Empty));
        let s = Segment::empty(view(), "test", SegmentFlag::OutsideView);
        assert_eq!(s.provenance.flags, vec![SegmentFlag::OutsideView]);
    }

    #[test]
    fn bbox_and_centroid() {
        let mut m = vec![false; 16];
        m[5] = true; // (1,1)
        m[10] = true; // (2,2)
        let s = Segment::new(view(), m, "test");
        assert_eq!(s.bbox(), Some(PixelBox { r0: 1, c0: 1, r1: 2, c1: 2 }));
        // pixel centres (1.5, 2.5) and (2.5, 1.5) in scene coords -> mean (2, 2)
        assert_eq!(s.centroid_scene(), Some([2.0, 2.0]));
    }

    #[test]
    fn confidence_is_zero_off_mask() {
        let mut m = vec![false; 16];
        m[0] = true;
        let s = Segment::new(view(), m, "t").with_confidence(vec![0.7; 16]);
        let c = s.confidence.unwrap();
        assert_eq!(c[0], 0.7);
        assert!(c[1..].iter().all(|&v| v == 0.0));
    }
}
