//! Named landmark polygons in world coordinates, stored as a GeoJSON subset.
//!
//! Only `FeatureCollection` of `Polygon` features is accepted. Properties are
//! `name`, optional `aliases` and `tags`. Coordinates are world meters in the
//! frame the scene transform maps into; `crs_note` documents that frame.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{is_simple_ring, point_in_polygon};
use crate::georef::GeoTransform;
use crate::render::TopDownView;
use crate::scene::synth::SynthTruth;
use crate::segment::{Segment, SegmentFlag};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("malformed registry: {0}")]
    Malformed(String),
    #[error("feature {index}: {reason}")]
    InvalidFeature { index: usize, reason: String },
    #[error("duplicate landmark name {0:?}")]
    DuplicateName(String),
    #[error("landmark not found: {0:?}")]
    LandmarkNotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub name: String,
    pub aliases: Vec<String>,
    pub tags: Vec<String>,
    /// Exterior ring first, then holes; rings are open (no repeated closing vertex).
    pub rings: Vec<Vec<[f64; 2]>>,
}

impl Landmark {
    pub fn exterior(&self) -> &[[f64; 2]] {
        &self.rings[0]
    }

    /// Even-odd over all rings, so holes are excluded.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.rings.iter().filter(|r| point_in_polygon(r, p)).count() % 2 == 1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    pub crs_note: Option<String>,
    landmarks: Vec<Landmark>,
    index: BTreeMap<String, usize>,
}

/// Case-fold, trim, drop punctuation and collapse internal whitespace.
pub fn normalize_name(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Serialize, Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crs_note: Option<String>,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    properties: Properties,
    geometry: Geometry,
}

#[derive(Serialize, Deserialize)]
struct Properties {
    name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<Vec<[f64; 2]>>,
}

impl Registry {
    pub fn new(crs_note: Option<String>) -> Self {
        Self { crs_note, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    /// Adds a landmark after validating its rings and checking every name and
    /// alias against existing entries.
    pub fn insert(&mut self, mut lm: Landmark) -> Result<(), RegistryError> {
        let index = self.landmarks.len();
        if lm.rings.is_empty() {
            return Err(RegistryError::InvalidFeature { index, reason: "polygon has no rings".into() });
        }
        for ring in &mut lm.rings {
            if ring.len() > 1 && ring.first() == ring.last() {
                ring.pop();
            }
            if ring.iter().flatten().any(|v| !v.is_finite()) {
                return Err(RegistryError::InvalidFeature { index, reason: "non-finite coordinate".into() });
            }
            if !is_simple_ring(ring) {
                return Err(RegistryError::InvalidFeature { index, reason: format!("{:?} is not a simple polygon", lm.name) });
            }
        }
        let keys: Vec<String> = std::iter::once(&lm.name).chain(&lm.aliases).map(|n| normalize_name(n)).collect();
        for (k, raw) in keys.iter().zip(std::iter::once(&lm.name).chain(&lm.aliases)) {
            if k.is_empty() {
                return Err(RegistryError::InvalidFeature { index, reason: "empty name".into() });
            }
            if self.index.contains_key(k) || keys.iter().filter(|o| *o == k).count() > 1 {
                return Err(RegistryError::DuplicateName(raw.clone()));
            }
        }
        for k in keys {
            self.index.insert(k, index);
        }
        self.landmarks.push(lm);
        Ok(())
    }

    pub fn lookup_landmark(&self, query: &str) -> Result<&Landmark, RegistryError> {
        self.index
            .get(&normalize_name(query))
            .map(|&i| &self.landmarks[i])
            .ok_or_else(|| RegistryError::LandmarkNotFound(query.to_string()))
    }

    pub fn from_geojson(text: &str) -> Result<Self, RegistryError> {
        let fc: FeatureCollection = serde_json::from_str(text).map_err(|e| RegistryError::Malformed(e.to_string()))?;
        if fc.kind != "FeatureCollection" {
            return Err(RegistryError::Malformed(format!("expected FeatureCollection, got {}", fc.kind)));
        }
        let mut reg = Self::new(fc.crs_note);
        for (index, f) in fc.features.into_iter().enumerate() {
            if f.kind != "Feature" || f.geometry.kind != "Polygon" {
                return Err(RegistryError::InvalidFeature { index, reason: format!("unsupported geometry {}", f.geometry.kind) });
            }
            reg.insert(Landmark { name: f.properties.name, aliases: f.properties.aliases, tags: f.properties.tags, rings: f.geometry.coordinates })?;
        }
        Ok(reg)
    }

    pub fn to_geojson(&self) -> String {
        let fc = FeatureCollection {
            kind: "FeatureCollection".into(),
            crs_note: self.crs_note.clone(),
            features: self
                .landmarks
                .iter()
                .map(|l| Feature {
                    kind: "Feature".into(),
                    properties: Properties { name: l.name.clone(), aliases: l.aliases.clone(), tags: l.tags.clone() },
                    geometry: Geometry {
                        kind: "Polygon".into(),
                        coordinates: l
                            .rings
                            .iter()
                            .map(|r| r.iter().chain(r.first()).copied().collect())
                            .collect(),
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&fc).expect("registry serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        Self::from_geojson(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RegistryError> {
        std::fs::write(path, self.to_geojson())?;
        Ok(())
    }

    /// Every named object of a synthetic city.
    pub fn from_truth(truth: &SynthTruth) -> Result<Self, RegistryError> {
        let mut reg = Self::new(Some("synthetic world meters, +x east, +y north".into()));
        for o in &truth.objects {
            if let Some(name) = &o.name {
                reg.insert(Landmark { name: name.clone(), aliases: o.aliases.clone(), tags: vec![o.class.clone()], rings: vec![o.footprint.clone()] })?;
            }
        }
        Ok(reg)
    }
}

/// Mask of pixels whose centre, mapped to world, lies inside the landmark.
pub fn rasterize_polygon(lm: &Landmark, view: &TopDownView, transform: &GeoTransform) -> Segment {
    let n = view.pixel_count();
    // scene-space bounding box of the exterior keeps the scan local
    let (mut c0, mut c1, mut r0, mut r1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &w in lm.exterior() {
        let px = view.to_pixel(transform.to_scene(w));
        c0 = c0.min(px[0]);
        c1 = c1.max(px[0]);
        r0 = r0.min(px[1]);
        r1 = r1.max(px[1]);
    }
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
    let (cs, ce) = (clamp(c0.floor() - 1.0, view.width), clamp(c1.ceil() + 1.0, view.width));
    let (rs, re) = (clamp(r0.floor() - 1.0, view.height), clamp(r1.ceil() + 1.0, view.height));
    let mut mask = vec![false; n];
    for r in rs..re {
        for c in cs..ce {
            if lm.contains(transform.to_world(view.pixel_center(r, c))) {
                mask[r * view.width + c] = true;
            }
        }
    }
    if mask.iter().any(|&m| m) {
        Segment::new(*view, mask, "landmark")
    } else {
        Segment::empty(*view, "landmark", SegmentFlag::OutsideView)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(name: &str, x: f64, y: f64, s: f64) -> Landmark {
        Landmark { name: name.into(), aliases: vec![], tags: vec![], rings: vec![vec![[x, y], [x + s, y], [x + s, y + s], [x, y + s]]] }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_name("  Trinity   HALL! "), "trinity hall");
        assert_eq!(normalize_name("St. Paul's"), "st pauls");
    }

    #[test]
    fn lookup_is_case_and_space_insensitive() {
        let mut r = Registry::default();
        r.insert(Landmark { aliases: vec!["Building A".into()], ..square("Trinity Hall", 0.0, 0.0, 10.0) }).unwrap();
        assert_eq!(r.lookup_landmark("trinity  hall").unwrap().name, "Trinity Hall");
        assert_eq!(r.lookup_landmark("BUILDING A").unwrap().name, "Trinity Hall");
        assert!(matches!(r.lookup_landmark("Nowhere"), Err(RegistryError::LandmarkNotFound(_))));
    }

    #[test]
    fn duplicates_rejected() {
        let mut r = Registry::default();
        r.insert(square("A", 0.0, 0.0, 1.0)).unwrap();
        assert!(matches!(r.insert(square("a ", 5.0, 5.0, 1.0)), Err(RegistryError::DuplicateName(_))));
    }

    #[test]
    fn non_simple_polygon_rejected() {
        let mut r = Registry::default();
        let bow = Landmark { rings: vec![vec![[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]]], ..square("B", 0.0, 0.0, 1.0) };
        assert!(matches!(r.insert(bow), Err(RegistryError::InvalidFeature { .. })));
    }

    #[test]
    fn geojson_round_trip() {
        let mut r = Registry::new(Some("local meters".into()));
        r.insert(Landmark { aliases: vec!["X".into()], tags: vec!["building".into()], ..square("A", 1.0, 2.0, 3.0) }).unwrap();
        let text = r.to_geojson();
        assert!(text.contains("\"FeatureCollection\""));
        assert_eq!(Registry::from_geojson(&text).unwrap(), r);
    }

    #[test]
    fn rasterizes_pixel_centres() {
        let view = TopDownView::new([0.0, 10.0], 10, 10, 1.0).unwrap();
        let s = rasterize_polygon(&square("A", 2.0, 2.0, 3.0), &view, &GeoTransform::identity());
        assert_eq!(s.count(), 9);
        // world y in [2, 5] -> rows 5..8
        assert!(s.get(5, 2) && s.get(7, 4) && !s.get(4, 2));
        let far = rasterize_polygon(&square("B", 50.0, 50.0, 3.0), &view, &GeoTransform::identity());
        assert!(far.is_empty() && far.has_flag(SegmentFlag::OutsideView));
    }

    #[test]
    fn holes_are_excluded() {
        let mut lm = square("A", 0.0, 0.0, 6.0);
        lm.rings.push(vec![[2.0, 2.0], [4.0, 2.0], [4.0, 4.0], [2.0, 4.0]]);
        assert!(lm.contains([1.0, 1.0]));
        assert!(!lm.contains([3.0, 3.0]));
    }
}
