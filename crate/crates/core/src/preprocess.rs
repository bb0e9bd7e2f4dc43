//! Scene preprocessing: thresholding, majority denoising, connected-component
//! segmentation, Zhang-Suen thinning and window normalization.

use serde::{Deserialize, Serialize};

use crate::image::{BinaryImage, GrayImage};
use crate::scale::ScaleWindow;

/// How a grayscale scene is turned into foreground/background.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum Threshold {
    /// Foreground iff intensity >= the given level.
    Fixed(u8),
    /// Level chosen by maximizing between-class variance.
    Otsu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Returns the Otsu level for `img`, or `None` when the image has a single
/// intensity (no split exists).
///
/// Class 0 holds intensities `< t`, class 1 holds `>= t`. When several levels
/// reach the maximal between-class variance the midpoint of the first and
/// last maximizer is returned.
pub fn otsu_threshold(img: &GrayImage) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let total = img.data().len() as f64;
    let levels = hist.iter().filter(|&&c| c > 0).count();
    if levels < 2 {
        return None;
    }

    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut weight0 = 0.0;
    let mut sum0 = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut first = 1usize;
    let mut last = 1usize;
    for t in 1..256 {
        weight0 += hist[t - 1] as f64;
        sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        let weight1 = total - weight0;
        if weight0 == 0.0 || weight1 == 0.0 {
            continue;
        }
        let mean0 = sum0 / weight0;
        let mean1 = (sum_all - sum0) / weight1;
        let between = weight0 * weight1 * (mean0 - mean1) * (mean0 - mean1);
        // relative tolerance so a flat plateau is not split by rounding noise
        if between > best * (1.0 + 1e-12) {
            best = between;
            first = t;
            last = t;
        } else if between >= best * (1.0 - 1e-12) {
            last = t;
        }
    }
    Some(((first + last) / 2) as u8)
}

pub fn binarize(img: &GrayImage, mode: Threshold) -> BinaryImage {
    let level = match mode {
        Threshold::Fixed(t) => Some(t),
        Threshold::Otsu => otsu_threshold(img),
    };
    let bits = match level {
        Some(t) => img.data().iter().map(|&v| v >= t).collect(),
        None => vec![false; img.data().len()],
    };
    BinaryImage::from_bits(img.width(), img.height(), bits).expect("same dimensions")
}

/// Majority filter over a `(2r+1)^2` window with replicate padding.
///
/// A pixel becomes foreground iff strictly more than half of its window is
/// foreground. `radius == 0` returns the input.
pub fn denoise_median(img: &BinaryImage, radius: usize) -> BinaryImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let r = radius as isize;
    let pw = w + 2 * radius;
    let ph = h + 2 * radius;
    // summed-area table over the replicate-padded image, with a zero row/col
    let mut sat = vec![0u32; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let sy = (py as isize - r).clamp(0, h as isize - 1) as usize;
        let mut row = 0u32;
        for px in 0..pw {
            let sx = (px as isize - r).clamp(0, w as isize - 1) as usize;
            row += u32::from(img.get(sx, sy));
            sat[(py + 1) * (pw + 1) + px + 1] = sat[py * (pw + 1) + px + 1] + row;
        }
    }
    let side = 2 * radius + 1;
    let half = (side * side / 2) as u32;
    let mut out = BinaryImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (x0, y0, x1, y1) = (x, y, x + side, y + side);
            let count = sat[y1 * (pw + 1) + x1] + sat[y0 * (pw + 1) + x0]
                - sat[y0 * (pw + 1) + x1]
                - sat[y1 * (pw + 1) + x0];
            out.set(x, y, count > half);
        }
    }
    out
}

/// Axis-aligned bounding box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.w && y < self.y0 + self.h
    }

    pub fn longer_side(&self) -> u32 {
        self.w.max(self.h)
    }
}

/// One connected foreground component.
///
/// Pixels are kept in raster order (`y`, then `x`), which makes equality and
/// every derived quantity independent of how the component was discovered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectBlob {
    pixels: Vec<(u32, u32)>,
    bbox: BBox,
}

impl ObjectBlob {
    /// Builds a blob from a non-empty pixel list. Duplicates are removed.
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "a blob needs at least one pixel");
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Self {
            pixels,
            bbox: BBox {
                x0,
                y0,
                w: x1 - x0 + 1,
                h: y1 - y0 + 1,
            },
        }
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// The blob as a mask covering its bbox grown by `pad` on every side.
    /// Pixel `(x, y)` lands at `(x - x0 + pad, y - y0 + pad)`.
    pub fn local_mask(&self, pad: usize) -> BinaryImage {
        let b = self.bbox;
        let mut mask = BinaryImage::new(b.w as usize + 2 * pad, b.h as usize + 2 * pad);
        for &(x, y) in &self.pixels {
            mask.set((x - b.x0) as usize + pad, (y - b.y0) as usize + pad, true);
        }
        mask
    }

    /// Same shape with the bbox origin moved to `(x0, y0)`.
    pub fn translated_to(&self, x0: u32, y0: u32) -> Self {
        let b = self.bbox;
        Self {
            pixels: self
                .pixels
                .iter()
                .map(|&(x, y)| (x - b.x0 + x0, y - b.y0 + y0))
                .collect(),
            bbox: BBox { x0, y0, ..b },
        }
    }
}

/// Labels connected foreground components and returns those with at least
/// `min_area` pixels, ordered by bbox `(y0, x0)` and then by first pixel.
///
/// Two-pass labeling with a union-find over provisional labels.
pub fn segment(img: &BinaryImage, connectivity: Connectivity, min_area: usize) -> Vec<ObjectBlob> {
    let (w, h) = (img.width(), img.height());
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];

    fn find(parent: &mut [u32], mut a: u32) -> u32 {
        while parent[a as usize] != a {
            parent[a as usize] = parent[parent[a as usize] as usize];
            a = parent[a as usize];
        }
        a
    }

    // neighbours already visited in raster order
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(0, -1), (-1, 0)],
        Connectivity::Eight => &[(-1, -1), (0, -1), (1, -1), (-1, 0)],
    };

    for y in 0..h {
        for x in 0..w {
            if !img.get(x, y) {
                continue;
            }
            let mut current = 0u32;
            for &(dx, dy) in back {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if !img.get_or_background(nx, ny) {
                    continue;
                }
                let l = labels[ny as usize * w + nx as usize];
                if current == 0 {
                    current = find(&mut parent, l);
                } else {
                    let (a, b) = (find(&mut parent, current), find(&mut parent, l));
                    if a != b {
                        let (lo, hi) = (a.min(b), a.max(b));
                        parent[hi as usize] = lo;
                        current = lo;
                    }
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            labels[y * w + x] = current;
        }
    }

    let mut groups: std::collections::BTreeMap<u32, Vec<(u32, u32)>> = Default::default();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l != 0 {
                let root = find(&mut parent, l);
                groups.entry(root).or_default().push((x as u32, y as u32));
            }
        }
    }

    let mut blobs: Vec<ObjectBlob> = groups
        .into_values()
        .filter(|p| p.len() >= min_area.max(1))
        .map(ObjectBlob::from_pixels)
        .collect();
    blobs.sort_by_key(|b| (b.bbox.y0, b.bbox.x0, b.pixels[0].1, b.pixels[0].0));
    blobs
}

/// Zhang-Suen skeleton of a blob.
///
/// Runs the two deletion subiterations until neither removes a pixel. The
/// plain rule erases 2x2 blocks completely; if nothing would survive, the
/// pixel nearest the centroid is kept so the result is never empty.
pub fn thin(blob: &ObjectBlob) -> ObjectBlob {
    let mut mask = blob.local_mask(1);
    let (w, h) = (mask.width(), mask.height());

    let neighbours = |m: &BinaryImage, x: usize, y: usize| -> [bool; 8] {
        // P2..P9: N, NE, E, SE, S, SW, W, NW
        [
            m.get(x, y - 1),
            m.get(x + 1, y - 1),
            m.get(x + 1, y),
            m.get(x + 1, y + 1),
            m.get(x, y + 1),
            m.get(x - 1, y + 1),
            m.get(x - 1, y),
            m.get(x - 1, y - 1),
        ]
    };

    let mut to_delete = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_delete.clear();
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    if !mask.get(x, y) {
                        continue;
                    }
                    let p = neighbours(&mask, x, y);
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let [n, _, e, _, s, _, west, _] = p;
                    let keep = if step == 0 {
                        (n && e && s) || (e && s && west)
                    } else {
                        (n && e && west) || (n && s && west)
                    };
                    if !keep {
                        to_delete.push((x, y));
                    }
                }
            }
            for &(x, y) in &to_delete {
                mask.set(x, y, false);
            }
            changed |= !to_delete.is_empty();
        }
        if !changed {
            break;
        }
    }

    let b = blob.bbox;
    let pixels: Vec<(u32, u32)> = mask
        .foreground()
        .into_iter()
        .map(|(x, y)| (x - 1 + b.x0, y - 1 + b.y0))
        .collect();
    if pixels.is_empty() {
        return ObjectBlob::from_pixels(vec![nearest_to_centroid(blob)]);
    }
    ObjectBlob::from_pixels(pixels)
}

fn nearest_to_centroid(blob: &ObjectBlob) -> (u32, u32) {
    let n = blob.area() as f64;
    let cx = blob.pixels.iter().map(|p| f64::from(p.0)).sum::<f64>() / n;
    let cy = blob.pixels.iter().map(|p| f64::from(p.1)).sum::<f64>() / n;
    *blob
        .pixels
        .iter()
        .min_by(|a, b| {
            let da = (f64::from(a.0) - cx).powi(2) + (f64::from(a.1) - cy).powi(2);
            let db = (f64::from(b.0) - cx).powi(2) + (f64::from(b.1) - cy).powi(2);
            da.total_cmp(&db)
        })
        .expect("non-empty blob")
}

/// Number of skeleton pixels with exactly one 8-neighbour.
pub fn endpoint_count(skeleton: &ObjectBlob) -> usize {
    let mask = skeleton.local_mask(1);
    let mut count = 0;
    for (x, y) in mask.foreground() {
        let (x, y) = (x as isize, y as isize);
        let n = Connectivity::Eight
            .offsets()
            .iter()
            .filter(|(dx, dy)| mask.get_or_background(x + dx, y + dy))
            .count();
        if n == 1 {
            count += 1;
        }
    }
    count
}

/// Resamples the blob (nearest neighbour) into a `side x side` square so the
/// longer bbox side spans the window; the shorter axis is centred.
pub fn normalize(blob: &ObjectBlob, window: &ScaleWindow) -> BinaryImage {
    let side = window.side as usize;
    assert!(side >= 1, "window side must be positive");
    let b = blob.bbox;
    let (bw, bh) = (b.w as usize, b.h as usize);
    let longer = bw.max(bh);
    let scaled = |len: usize| ((len * side + longer / 2) / longer).clamp(1, side);
    let (sw, sh) = (scaled(bw), scaled(bh));
    let (ox, oy) = ((side - sw) / 2, (side - sh) / 2);

    let local = blob.local_mask(0);
    let mut out = BinaryImage::new(side, side);
    for v in 0..sh {
        // sample at the centre of the destination pixel
        let sy = (((2 * v + 1) * bh) / (2 * sh)).min(bh - 1);
        for u in 0..sw {
            let sx = (((2 * u + 1) * bw) / (2 * sw)).min(bw - 1);
            if local.get(sx, sy) {
                out.set(ox + u, oy + v, true);
            }
        }
    }
    if out.count_foreground() == 0 {
        let (px, py) = blob.pixels[0];
        let u = ((px - b.x0) as usize * sw / bw).min(sw - 1);
        let v = ((py - b.y0) as usize * sh / bh).min(sh - 1);
        out.set(ox + u, oy + v, true);
    }
    out
}
