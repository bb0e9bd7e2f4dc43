//! Seeded synthetic shape corpus: one bright object per dark scene, one
//! manifest per scene.
//!
//! Every item draws from its own ChaCha stream keyed by (class, ordinal), so
//! an item does not depend on how many others were generated.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::ShapeClass;
use crate::image::GrayImage;
use crate::pipeline::{Engine, Manifest};

pub const BACKGROUND: u8 = 30;
pub const FOREGROUND: u8 = 210;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusItem {
    pub label: String,
    pub class: ShapeClass,
    pub image: GrayImage,
}

/// Object geometry in local coordinates centred on the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Figure {
    Rect { len: f64, wid: f64 },
    Disk { r: f64 },
    /// Base `b` on `v = h/2`, apex at `(0, -h/2)`.
    Triangle { b: f64, h: f64 },
    /// Annular sector of outer radius `r`, thickness `t`, centred on angle 0.
    Arc { r: f64, t: f64, span: f64 },
    Plus { s: f64, w: f64 },
    Ell { s: f64, w: f64 },
    Tee { s: f64, w: f64 },
}

impl Figure {
    fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Figure::Rect { len, wid } => u.abs() <= len / 2.0 && v.abs() <= wid / 2.0,
            Figure::Disk { r } => u * u + v * v <= r * r,
            Figure::Triangle { b, h } => {
                let depth = v + h / 2.0;
                (0.0..=h).contains(&depth) && u.abs() <= b / 2.0 * depth / h
            }
            Figure::Arc { r, t, span } => {
                let rho = (u * u + v * v).sqrt();
                rho <= r && rho >= r - t && v.atan2(u).abs() <= span / 2.0
            }
            Figure::Plus { s, w } => {
                let half = s / 2.0;
                (u.abs() <= w / 2.0 && v.abs() <= half) || (v.abs() <= w / 2.0 && u.abs() <= half)
            }
            Figure::Ell { s, w } => {
                let half = s / 2.0;
                u.abs() <= half && v.abs() <= half && (u <= -half + w || v >= half - w)
            }
            Figure::Tee { s, w } => {
                let half = s / 2.0;
                u.abs() <= half && v.abs() <= half && (v <= -half + w || u.abs() <= w / 2.0)
            }
        }
    }

    /// Radius of a disc around the origin containing the figure.
    fn reach(&self) -> f64 {
        match *self {
            Figure::Rect { len, wid } => (len * len + wid * wid).sqrt() / 2.0,
            Figure::Disk { r } | Figure::Arc { r, .. } => r,
            Figure::Triangle { b, h } => ((b / 2.0).powi(2) + (h / 2.0).powi(2)).sqrt().max(h / 2.0),
            Figure::Plus { s, .. } | Figure::Ell { s, .. } | Figure::Tee { s, .. } => s / 2.0 * 2f64.sqrt(),
        }
    }
}

fn quarter_turn(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0..4) as f64 * PI / 2.0
}

fn jitter(rng: &mut ChaCha8Rng, degrees: f64) -> f64 {
    rng.gen_range(-degrees..=degrees).to_radians()
}

/// Random figure of `class` and its rotation.
fn sample(class: ShapeClass, rng: &mut ChaCha8Rng) -> (Figure, f64) {
    match class {
        ShapeClass::Line => {
            let fig = Figure::Rect {
                len: rng.gen_range(70..=120) as f64,
                wid: rng.gen_range(3..=5) as f64,
            };
            let base = if rng.gen_bool(0.5) { 0.0 } else { PI / 2.0 };
            (fig, base + jitter(rng, 2.0))
        }
        ShapeClass::Square => {
            let s = rng.gen_range(16..=60) as f64;
            (Figure::Rect { len: s, wid: s }, quarter_turn(rng) + jitter(rng, 3.0))
        }
        ShapeClass::Rectangle => {
            let len = rng.gen_range(30..=90) as f64;
            let wid = (len * rng.gen_range(0.25..=0.75)).round().max(4.0);
            (Figure::Rect { len, wid }, quarter_turn(rng) + jitter(rng, 1.5))
        }
        ShapeClass::Circle => (Figure::Disk { r: rng.gen_range(8.0..=40.0) }, 0.0),
        ShapeClass::Triangle => {
            let b = rng.gen_range(24..=70) as f64;
            let h = (b * rng.gen_range(0.6..=1.2)).round();
            (Figure::Triangle { b, h }, quarter_turn(rng) + jitter(rng, 5.0))
        }
        ShapeClass::Arc => {
            let r = rng.gen_range(24.0..=50.0);
            let t = rng.gen_range(3.0..=0.15 * r);
            let span = rng.gen_range(150.0..=270.0f64).to_radians();
            (Figure::Arc { r, t, span }, rng.gen_range(0.0..2.0 * PI))
        }
        ShapeClass::Blob => {
            let s = rng.gen_range(30..=70) as f64;
            let w = (s * rng.gen_range(0.28..=0.4)).round();
            let fig = match rng.gen_range(0..3) {
                0 => Figure::Plus { s, w },
                1 => Figure::Ell { s, w },
                _ => Figure::Tee { s, w },
            };
            (fig, quarter_turn(rng) + jitter(rng, 2.0))
        }
    }
}

/// Rasterizes by pixel-centre sampling, placing the figure at a random
/// offset inside a margin.
fn render(fig: Figure, angle: f64, rng: &mut ChaCha8Rng) -> GrayImage {
    let reach = fig.reach().ceil() as usize + 1;
    let (mx, my) = (rng.gen_range(8..=24), rng.gen_range(8..=24));
    let (w, h) = (2 * reach + mx + rng.gen_range(8..=24), 2 * reach + my + rng.gen_range(8..=24));
    let (cx, cy) = ((mx + reach) as f64, (my + reach) as f64);
    let (sin, cos) = angle.sin_cos();
    let mut img = GrayImage::filled(w, h, BACKGROUND);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            // rotate the sample point back into the figure's frame
            let (u, v) = (cos * dx + sin * dy, -sin * dx + cos * dy);
            if fig.contains(u, v) {
                img.set(x, y, FOREGROUND);
            }
        }
    }
    img
}

/// Sets each pixel to 0 or 255 (evenly) with probability `rate`.
pub fn salt_and_pepper(img: &mut GrayImage, rate: f64, rng: &mut impl Rng) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            if rng.gen_bool(rate) {
                img.set(x, y, if rng.gen_bool(0.5) { 255 } else { 0 });
            }
        }
    }
}

pub fn label(class: ShapeClass, ordinal: usize) -> String {
    format!("{}-{ordinal:03}", class.name().to_lowercase())
}

pub fn generate_item(seed: u64, class: ShapeClass, ordinal: usize, noise: f64) -> CorpusItem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class.code() as u64) << 32) | ordinal as u64);
    let (fig, angle) = sample(class, &mut rng);
    let mut image = render(fig, angle, &mut rng);
    if noise > 0.0 {
        salt_and_pepper(&mut image, noise, &mut rng);
    }
    CorpusItem {
        label: label(class, ordinal),
        class,
        image,
    }
}

/// `per_class` items of every class, classes in code order.
pub fn generate(seed: u64, per_class: usize, noise: f64) -> Vec<CorpusItem> {
    ShapeClass::ALL
        .iter()
        .flat_map(|&c| (0..per_class).map(move |i| generate_item(seed, c, i, noise)))
        .collect()
}

/// Writes `<label>.pgm` and `<label>.manifest` for every item.
pub fn write_corpus(dir: &Path, items: &[CorpusItem]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for item in items {
        let scene = format!("{}.pgm", item.label);
        item.image.write_pgm(dir.join(&scene))?;
        let manifest = dir.join(format!("{}.manifest", item.label));
        std::fs::write(&manifest, Manifest::render(&scene, std::slice::from_ref(&item.label)))
            .map_err(|e| Error::io(&manifest, e))?;
    }
    Ok(())
}

/// Shape class of the largest blob of each item, or `None` when nothing
/// survives segmentation.
pub fn classify_items(engine: &Engine, items: &[CorpusItem]) -> Vec<Option<ShapeClass>> {
    items
        .iter()
        .map(|item| {
            let blobs = engine.blobs(&item.image);
            // first of the largest, so the choice is deterministic
            let largest = blobs
                .iter()
                .rev()
                .max_by_key(|b| b.area())?;
            Some(engine.key(largest, true).shape)
        })
        .collect()
}

/// Fraction of items whose largest blob is classified as the item's class.
pub fn classification_accuracy(engine: &Engine, items: &[CorpusItem]) -> f64 {
    if items.is_empty() {
        return 1.0;
    }
    let hits = classify_items(engine, items)
        .iter()
        .zip(items)
        .filter(|(got, item)| **got == Some(item.class))
        .count();
    hits as f64 / items.len() as f64
}
