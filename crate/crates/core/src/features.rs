//! Blob descriptors and the primitive-shape decision list.
//!
//! Layout of the 12 base components:
//!
//! | index | feature |
//! |-------|---------|
//! | 0 | circularity `4*pi*A / P^2` |
//! | 1 | extent `A / (w*h)` |
//! | 2 | aspect `min(w,h) / max(w,h)` |
//! | 3 | solidity `A / hull area` |
//! | 4 | eccentricity of the second-moment ellipse |
//! | 5..12 | the seven Hu invariants, log-compressed |
//!
//! Every quantity is computed from coordinates relative to the bbox origin,
//! so translating a blob leaves its vector bit-identical.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::image::BinaryImage;
use crate::preprocess::{endpoint_count, thin, ObjectBlob};

/// Number of base feature components.
pub const BASE_DIM: usize = 12;

/// Scale applied to a Hu invariant before `log10` compression.
pub const HU_COMPRESSION: f64 = 1e6;

/// Upper bound for the ratio features (discrete perimeter overshoot).
const RATIO_CAP: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn circularity(&self) -> f64 {
        self.0[0]
    }

    pub fn extent(&self) -> f64 {
        self.0[1]
    }

    pub fn aspect(&self) -> f64 {
        self.0[2]
    }

    pub fn solidity(&self) -> f64 {
        self.0[3]
    }

    pub fn eccentricity(&self) -> f64 {
        self.0[4]
    }

    /// Euclidean distance; both vectors must have the same length.
    pub fn distance(&self, other: &FeatureVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn with_appended(mut self, extra: &[f64]) -> Self {
        self.0.extend_from_slice(extra);
        self
    }
}

/// Primitive shape classes; codes are stable and used in the database.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ShapeClass {
    Line = 1,
    Rectangle = 2,
    Square = 3,
    Circle = 4,
    Triangle = 5,
    Arc = 6,
    Blob = 7,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 7] = [
        ShapeClass::Line,
        ShapeClass::Rectangle,
        ShapeClass::Square,
        ShapeClass::Circle,
        ShapeClass::Triangle,
        ShapeClass::Arc,
        ShapeClass::Blob,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Line => "LINE",
            ShapeClass::Rectangle => "RECTANGLE",
            ShapeClass::Square => "SQUARE",
            ShapeClass::Circle => "CIRCLE",
            ShapeClass::Triangle => "TRIANGLE",
            ShapeClass::Arc => "ARC",
            ShapeClass::Blob => "BLOB",
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown shape class {s:?}"))
    }
}

/// Decision-list thresholds, evaluated in order LINE, CIRCLE, SQUARE,
/// RECTANGLE, TRIANGLE, ARC, with BLOB as the fallback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeThresholds {
    pub line_max_aspect: f64,
    pub circle_min_circularity: f64,
    pub circle_min_solidity: f64,
    pub box_min_extent: f64,
    pub square_min_aspect: f64,
    pub triangle_min_solidity: f64,
    pub triangle_min_extent: f64,
    pub triangle_max_extent: f64,
    pub arc_max_solidity: f64,
    pub arc_endpoints: usize,
}

impl Default for ShapeThresholds {
    fn default() -> Self {
        Self {
            line_max_aspect: 0.15,
            circle_min_circularity: 0.82,
            circle_min_solidity: 0.9,
            box_min_extent: 0.85,
            square_min_aspect: 0.9,
            triangle_min_solidity: 0.85,
            triangle_min_extent: 0.40,
            triangle_max_extent: 0.60,
            arc_max_solidity: 0.5,
            arc_endpoints: 2,
        }
    }
}

pub fn extract_features(blob: &ObjectBlob) -> FeatureVector {
    features_of_mask(&blob.local_mask(0))
}

/// Features of every foreground pixel of `mask`, connected or not.
///
/// An empty mask yields the zero vector.
pub fn features_of_mask(mask: &BinaryImage) -> FeatureVector {
    let pixels = mask.foreground();
    if pixels.is_empty() {
        return FeatureVector::zeros(BASE_DIM);
    }
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for &(x, y) in &pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let rel: Vec<(i64, i64)> = pixels
        .iter()
        .map(|&(x, y)| (i64::from(x - x0), i64::from(y - y0)))
        .collect();
    let (w, h) = (f64::from(x1 - x0 + 1), f64::from(y1 - y0 + 1));
    let area = rel.len() as f64;

    let perimeter = marching_squares_perimeter(mask);
    let circularity = (4.0 * PI * area / (perimeter * perimeter)).min(RATIO_CAP);
    let extent = area / (w * h);
    let aspect = w.min(h) / w.max(h);

    let (hull_area, hull_perimeter) = convex_hull_measure(&rel);
    let solidity = (area / (hull_area + hull_perimeter / 2.0 + PI / 4.0)).min(RATIO_CAP);

    let moments = CentralMoments::of(&rel);
    let eccentricity = moments.eccentricity();
    let hu = moments.hu();

    let mut v = Vec::with_capacity(BASE_DIM);
    v.extend_from_slice(&[circularity, extent, aspect, solidity, eccentricity]);
    v.extend(hu.iter().map(|&h| compress_hu(h)));
    FeatureVector(v)
}

/// The seven Hu invariants of a blob, uncompressed.
pub fn hu_moments(blob: &ObjectBlob) -> [f64; 7] {
    let b = blob.bbox();
    let rel: Vec<(i64, i64)> = blob
        .pixels()
        .iter()
        .map(|&(x, y)| (i64::from(x - b.x0), i64::from(y - b.y0)))
        .collect();
    CentralMoments::of(&rel).hu()
}

/// `sign(h) * log10(1 + |h| * K) / 12`, clamped to `[-1, 1]`.
pub fn compress_hu(h: f64) -> f64 {
    (h.signum() * (1.0 + h.abs() * HU_COMPRESSION).log10() / 12.0).clamp(-1.0, 1.0)
}

/// Contour length of the iso-0.5 marching-squares polygon over pixel centres.
///
/// Each 2x2 cell contributes: one or three foreground corners, a half
/// diagonal; two adjacent corners, a unit segment; two opposite corners
/// (saddle), two half diagonals.
fn marching_squares_perimeter(mask: &BinaryImage) -> f64 {
    let half_diag = std::f64::consts::FRAC_1_SQRT_2;
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut total = 0.0;
    for y in -1..h {
        for x in -1..w {
            let a = mask.get_or_background(x, y);
            let b = mask.get_or_background(x + 1, y);
            let c = mask.get_or_background(x, y + 1);
            let d = mask.get_or_background(x + 1, y + 1);
            let n = a as u8 + b as u8 + c as u8 + d as u8;
            total += match n {
                1 | 3 => half_diag,
                2 if a == d => 2.0 * half_diag,
                2 => 1.0,
                _ => 0.0,
            };
        }
    }
    total
}

/// Area and perimeter of the convex hull of the given lattice points.
fn convex_hull_measure(points: &[(i64, i64)]) -> (f64, f64) {
    // only the extreme pixel of each row can be a hull vertex
    let mut rows: std::collections::BTreeMap<i64, (i64, i64)> = Default::default();
    for &(x, y) in points {
        let e = rows.entry(y).or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    let mut pts: Vec<(i64, i64)> = Vec::with_capacity(rows.len() * 2);
    for (&y, &(lo, hi)) in &rows {
        pts.push((lo, y));
        if hi != lo {
            pts.push((hi, y));
        }
    }
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        let perimeter = match pts.as_slice() {
            [a, b] => 2.0 * (((a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)) as f64).sqrt(),
            _ => 0.0,
        };
        return (0.0, perimeter);
    }

    fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    }
    // Andrew's monotone chain
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    let n = hull.len();
    let mut twice_area = 0i64;
    let mut perimeter = 0.0;
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        twice_area += a.0 * b.1 - b.0 * a.1;
        perimeter += (((b.0 - a.0).pow(2) + (b.1 - a.1).pow(2)) as f64).sqrt();
    }
    (twice_area.abs() as f64 / 2.0, perimeter)
}

struct CentralMoments {
    m00: f64,
    mu20: f64,
    mu02: f64,
    mu11: f64,
    mu30: f64,
    mu03: f64,
    mu21: f64,
    mu12: f64,
}

impl CentralMoments {
    fn of(points: &[(i64, i64)]) -> Self {
        let n = points.len() as f64;
        let cx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let cy = points.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let mut m = CentralMoments {
            m00: n,
            mu20: 0.0,
            mu02: 0.0,
            mu11: 0.0,
            mu30: 0.0,
            mu03: 0.0,
            mu21: 0.0,
            mu12: 0.0,
        };
        for &(x, y) in points {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            m.mu20 += dx * dx;
            m.mu02 += dy * dy;
            m.mu11 += dx * dy;
            m.mu30 += dx * dx * dx;
            m.mu03 += dy * dy * dy;
            m.mu21 += dx * dx * dy;
            m.mu12 += dx * dy * dy;
        }
        m
    }

    /// `sqrt(1 - lambda_min / lambda_max)` of the covariance; 1 when degenerate.
    fn eccentricity(&self) -> f64 {
        let (a, b, c) = (self.mu20, self.mu11, self.mu02);
        let root = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
        let major = (a + c + root) / 2.0;
        let minor = ((a + c - root) / 2.0).max(0.0);
        if major <= 0.0 {
            return 1.0;
        }
        (1.0 - minor / major).clamp(0.0, 1.0).sqrt()
    }

    fn hu(&self) -> [f64; 7] {
        let eta = |mu: f64, order: i32| mu / self.m00.powf(1.0 + f64::from(order) / 2.0);
        let n20 = eta(self.mu20, 2);
        let n02 = eta(self.mu02, 2);
        let n11 = eta(self.mu11, 2);
        let n30 = eta(self.mu30, 3);
        let n03 = eta(self.mu03, 3);
        let n21 = eta(self.mu21, 3);
        let n12 = eta(self.mu12, 3);

        let s1 = n30 + n12;
        let s2 = n21 + n03;
        let d1 = n30 - 3.0 * n12;
        let d2 = 3.0 * n21 - n03;
        [
            n20 + n02,
            (n20 - n02).powi(2) + 4.0 * n11 * n11,
            d1 * d1 + d2 * d2,
            s1 * s1 + s2 * s2,
            d1 * s1 * (s1 * s1 - 3.0 * s2 * s2) + d2 * s2 * (3.0 * s1 * s1 - s2 * s2),
            (n20 - n02) * (s1 * s1 - s2 * s2) + 4.0 * n11 * s1 * s2,
            d2 * s1 * (s1 * s1 - 3.0 * s2 * s2) - d1 * s2 * (3.0 * s1 * s1 - s2 * s2),
        ]
    }
}

/// Assigns the first matching class of the decision list.
///
/// The skeleton is only computed when the ARC rule's other conditions hold.
pub fn classify_shape(fv: &FeatureVector, blob: &ObjectBlob, t: &ShapeThresholds) -> ShapeClass {
    let (circ, extent, aspect, solidity) = (fv.circularity(), fv.extent(), fv.aspect(), fv.solidity());
    if aspect < t.line_max_aspect {
        ShapeClass::Line
    } else if circ > t.circle_min_circularity && solidity > t.circle_min_solidity {
        ShapeClass::Circle
    } else if extent > t.box_min_extent && aspect > t.square_min_aspect {
        ShapeClass::Square
    } else if extent > t.box_min_extent {
        ShapeClass::Rectangle
    } else if solidity > t.triangle_min_solidity
        && (t.triangle_min_extent..=t.triangle_max_extent).contains(&extent)
    {
        ShapeClass::Triangle
    } else if solidity < t.arc_max_solidity && endpoint_count(&thin(blob)) == t.arc_endpoints {
        ShapeClass::Arc
    } else {
        ShapeClass::Blob
    }
}
