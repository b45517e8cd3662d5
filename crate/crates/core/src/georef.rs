//! Scene-to-world georeferencing.
//!
//! Control points pair a location in the scene's ground plane with the same
//! location in a local planar metric frame. A similarity (default) or full
//! affine map is fitted by linear least squares.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeorefError {
    #[error("degenerate control point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("{kind:?} fit needs at least {needed} control points, got {got}")]
    Underdetermined { kind: TransformKind, needed: usize, got: usize },
    #[error("malformed control points file: {0}")]
    Malformed(String),
    #[error("transform is not invertible")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    #[default]
    Similarity,
    Affine,
}

impl TransformKind {
    pub fn min_points(self) -> usize {
        match self {
            TransformKind::Similarity => 2,
            TransformKind::Affine => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToWorld,
    ToScene,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub scene: [f64; 2],
    pub world: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlPointSet {
    pub pairs: Vec<ControlPoint>,
}

impl ControlPointSet {
    pub fn new(pairs: Vec<ControlPoint>) -> Self {
        Self { pairs }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeorefError> {
        let text = std::fs::read_to_string(path).map_err(|e| GeorefError::Malformed(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| GeorefError::Malformed(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// 2x3 row-major map `world = M * [x, y, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub kind: TransformKind,
    pub matrix: [[f64; 3]; 2],
    pub inverse: [[f64; 3]; 2],
    pub residual_rmse: f64,
}

fn invert(m: &[[f64; 3]; 2]) -> Option<[[f64; 3]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !det.is_finite() || det.abs() < f64::MIN_POSITIVE {
        return None;
    }
    let a = m[1][1] / det;
    let b = -m[0][1] / det;
    let c = -m[1][0] / det;
    let d = m[0][0] / det;
    let (tx, ty) = (m[0][2], m[1][2]);
    Some([[a, b, -(a * tx + b * ty)], [c, d, -(c * tx + d * ty)]])
}

fn apply(m: &[[f64; 3]; 2], p: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
    ]
}

impl GeoTransform {
    pub fn identity() -> Self {
        Self::from_matrix(TransformKind::Similarity, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 0.0).unwrap()
    }

    /// Scale, counter-clockwise rotation (radians) and translation.
    pub fn from_similarity(scale: f64, rotation: f64, translation: [f64; 2]) -> Self {
        let (s, c) = rotation.sin_cos();
        let m = [[scale * c, -scale * s, translation[0]], [scale * s, scale * c, translation[1]]];
        Self::from_matrix(TransformKind::Similarity, m, 0.0).expect("non-zero scale")
    }

    pub fn from_matrix(kind: TransformKind, matrix: [[f64; 3]; 2], residual_rmse: f64) -> Result<Self, GeorefError> {
        let inverse = invert(&matrix).ok_or(GeorefError::Singular)?;
        Ok(Self { kind, matrix, inverse, residual_rmse })
    }

    pub fn apply(&self, p: [f64; 2], direction: Direction) -> [f64; 2] {
        match direction {
            Direction::ToWorld => apply(&self.matrix, p),
            Direction::ToScene => apply(&self.inverse, p),
        }
    }

    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        apply(&self.matrix, p)
    }

    pub fn to_scene(&self, p: [f64; 2]) -> [f64; 2] {
        apply(&self.inverse, p)
    }

    /// Meters per scene unit. For affine maps this is the areal (geometric mean) scale.
    pub fn scale(&self) -> f64 {
        let m = &self.matrix;
        (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs().sqrt()
    }

    /// Counter-clockwise rotation of scene axes in the world frame, radians.
    pub fn rotation(&self) -> f64 {
        self.matrix[1][0].atan2(self.matrix[0][0])
    }

    /// True when scene +x maps to world east and scene +y to world north.
    pub fn is_north_aligned(&self, tol: f64) -> bool {
        let m = &self.matrix;
        let s = self.scale();
        m[0][0] > 0.0 && m[1][1] > 0.0 && m[0][1].abs() <= tol * s && m[1][0].abs() <= tol * s
    }

    /// Same map with world coordinates multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.matrix;
        for row in &mut m {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        Self::from_matrix(self.kind, m, self.residual_rmse * factor).expect("non-zero factor")
    }
}

fn rmse(m: &[[f64; 3]; 2], pts: &ControlPointSet) -> f64 {
    let sum: f64 = pts
        .pairs
        .iter()
        .map(|cp| {
            let q = apply(m, cp.scene);
            (q[0] - cp.world[0]).powi(2) + (q[1] - cp.world[1]).powi(2)
        })
        .sum();
    (sum / pts.len() as f64).sqrt()
}

fn check_points(points: &ControlPointSet, kind: TransformKind) -> Result<(), GeorefError> {
    let n = points.len();
    if n < kind.min_points() {
        return Err(GeorefError::Underdetermined { kind, needed: kind.min_points(), got: n });
    }
    if points.pairs.iter().any(|cp| cp.scene.iter().chain(&cp.world).any(|v| !v.is_finite())) {
        return Err(GeorefError::DegenerateConfiguration("non-finite coordinate".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if points.pairs[i].scene == points.pairs[j].scene {
                return Err(GeorefError::DegenerateConfiguration(format!("duplicate scene point at pairs {i} and {j}")));
            }
        }
    }
    if kind == TransformKind::Affine {
        // Collinearity: smallest eigenvalue of the scene-point scatter vs the largest.
        let (mx, my) = centroid(points.pairs.iter().map(|c| c.scene));
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for cp in &points.pairs {
            let (dx, dy) = (cp.scene[0] - mx, cp.scene[1] - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let tr = sxx + syy;
        let det = sxx * syy - sxy * sxy;
        let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
        let (lo, hi) = (tr / 2.0 - disc, tr / 2.0 + disc);
        if hi <= 0.0 || lo <= 1e-12 * hi {
            return Err(GeorefError::DegenerateConfiguration("scene points are collinear".into()));
        }
    }
    Ok(())
}

fn centroid(it: impl Iterator<Item = [f64; 2]>) -> (f64, f64) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in it {
        sx += p[0];
        sy += p[1];
        n += 1;
    }
    (sx / n as f64, sy / n as f64)
}

/// Least-squares fit of `world ~ T(scene)`.
pub fn estimate_transform(points: &ControlPointSet, kind: TransformKind) -> Result<GeoTransform, GeorefError> {
    check_points(points, kind)?;
    let matrix = match kind {
        TransformKind::Similarity => fit_similarity(points),
        TransformKind::Affine => fit_affine(points)?,
    };
    let residual = rmse(&matrix, points);
    GeoTransform::from_matrix(kind, matrix, residual)
        .map_err(|_| GeorefError::DegenerateConfiguration("fitted map is singular".into()))
}

// Closed form: with centred coordinates, a = sum(s.w)/|s|^2, b = sum(s x w)/|s|^2.
fn fit_similarity(points: &ControlPointSet) -> [[f64; 3]; 2] {
    let (sx, sy) = centroid(points.pairs.iter().map(|c| c.scene));
    let (wx, wy) = centroid(points.pairs.iter().map(|c| c.world));
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for cp in &points.pairs {
        let (px, py) = (cp.scene[0] - sx, cp.scene[1] - sy);
        let (qx, qy) = (cp.world[0] - wx, cp.world[1] - wy);
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
        norm += px * px + py * py;
    }
    let a = dot / norm;
    let b = cross / norm;
    [[a, -b, wx - (a * sx - b * sy)], [b, a, wy - (b * sx + a * sy)]]
}

fn fit_affine(points: &ControlPointSet) -> Result<[[f64; 3]; 2], GeorefError> {
    let n = points.len();
    // Centre the scene points for conditioning; re-absorb into the translation afterwards.
    let (sx, sy) = centroid(points.pairs.iter().map(|c| c.scene));
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => points.pairs[i].scene[0] - sx,
        1 => points.pairs[i].scene[1] - sy,
        _ => 1.0,
    });
    let svd = a.svd(true, true);
    let mut m = [[0.0; 3]; 2];
    for (row, out) in m.iter_mut().enumerate() {
        let b = DVector::from_fn(n, |i, _| points.pairs[i].world[row]);
        let x = svd
            .solve(&b, 1e-14)
            .map_err(|e| GeorefError::DegenerateConfiguration(e.to_string()))?;
        *out = [x[0], x[1], x[2] - x[0] * sx - x[1] * sy];
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_from(t: &GeoTransform, scene: &[[f64; 2]]) -> ControlPointSet {
        ControlPointSet::new(scene.iter().map(|&s| ControlPoint { scene: s, world: t.to_world(s) }).collect())
    }

    const GRID: [[f64; 2]; 5] = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [7.0, 3.0], [-4.0, 8.0]];

    #[test]
    fn identity_pairs_give_identity() {
        let t = estimate_transform(&pairs_from(&GeoTransform::identity(), &GRID), TransformKind::Similarity).unwrap();
        for (r, e) in t.matrix.iter().flatten().zip([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]) {
            assert!((r - e).abs() < 1e-12);
        }
        assert!(t.residual_rmse < 1e-12);
    }

    #[test]
    fn recovers_scale_rotation_translation() {
        let truth = GeoTransform::from_similarity(2.0, std::f64::consts::FRAC_PI_2, [5.0, -3.0]);
        let t = estimate_transform(&pairs_from(&truth, &GRID), TransformKind::Similarity).unwrap();
        assert!((t.scale() - 2.0).abs() < 1e-12);
        assert!((t.rotation() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(t.residual_rmse < 1e-9);
        // (1,0) -> (2cos90 + 5, 2sin90 - 3) = (5, -1)
        let p = t.apply([1.0, 0.0], Direction::ToWorld);
        assert!((p[0] - 5.0).abs() < 1e-9 && (p[1] + 1.0).abs() < 1e-9);
        let back = t.apply(p, Direction::ToScene);
        assert!((back[0] - 1.0).abs() < 1e-9 && back[1].abs() < 1e-9);
    }

    #[test]
    fn affine_recovers_shear() {
        let truth = GeoTransform::from_matrix(TransformKind::Affine, [[1.5, 0.3, 2.0], [-0.2, 0.8, 9.0]], 0.0).unwrap();
        let t = estimate_transform(&pairs_from(&truth, &GRID), TransformKind::Affine).unwrap();
        for (a, b) in t.matrix.iter().flatten().zip(truth.matrix.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_points_are_degenerate_for_affine() {
        let pts = pairs_from(&GeoTransform::identity(), &[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(estimate_transform(&pts, TransformKind::Affine), Err(GeorefError::DegenerateConfiguration(_))));
    }

    #[test]
    fn duplicate_points_are_degenerate() {
        let pts = pairs_from(&GeoTransform::identity(), &[[1.0, 1.0], [1.0, 1.0], [3.0, 0.0]]);
        assert!(matches!(estimate_transform(&pts, TransformKind::Affine), Err(GeorefError::DegenerateConfiguration(_))));
        assert!(matches!(estimate_transform(&pts, TransformKind::Similarity), Err(GeorefError::DegenerateConfiguration(_))));
    }

    #[test]
    fn too_few_points_is_underdetermined() {
        let pts = pairs_from(&GeoTransform::identity(), &[[1.0, 1.0]]);
        assert!(matches!(estimate_transform(&pts, TransformKind::Similarity), Err(GeorefError::Underdetermined { .. })));
    }

    #[test]
    fn north_alignment() {
        assert!(GeoTransform::from_similarity(3.0, 0.0, [1.0, 2.0]).is_north_aligned(1e-9));
        assert!(!GeoTransform::from_similarity(3.0, 0.2, [1.0, 2.0]).is_north_aligned(1e-9));
    }

    #[test]
    fn control_points_file_format() {
        let s = r#"[{"scene":[0,0],"world":[5,-3]},{"scene":[1,0],"world":[7,-3]}]"#;
        let pts: ControlPointSet = serde_json::from_str(s).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts.pairs[1].world, [7.0, -3.0]);
    }
}
