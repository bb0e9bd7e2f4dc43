//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shape_gate::dog::DogStack;
use shape_gate::features::FeatureVector;
use shape_gate::image::BinaryImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_binary(w: usize, h: usize, density: f64, rng: &mut ChaCha8Rng) -> BinaryImage {
    BinaryImage::from_bits(w, h, (0..w * h).map(|_| rng.gen_bool(density)).collect()).unwrap()
}

/// Breadth-first flood fill from every unvisited foreground pixel in raster
/// order. Components are returned with pixels sorted by `(y, x)` and ordered
/// by bbox `(y0, x0)`, then first pixel.
pub fn flood_fill_components(img: &BinaryImage, eight: bool, min_area: usize) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if !img.get(sx, sy) || seen[sy * w + sx] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([(sx, sy)]);
            seen[sy * w + sx] = true;
            while let Some((x, y)) = queue.pop_front() {
                comp.push((x as u32, y as u32));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if img.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            if comp.len() >= min_area {
                comp.sort_by_key(|&(x, y)| (y, x));
                out.push(comp);
            }
        }
    }
    out.sort_by_key(|c| {
        let y0 = c.iter().map(|p| p.1).min().unwrap();
        let x0 = c.iter().map(|p| p.0).min().unwrap();
        (y0, x0, c[0].1, c[0].0)
    });
    out
}

/// Smallest side `base * 2^k >= max(w, h)`, scanning upward one window at a
/// time. Returns (1-based index, side).
pub fn linear_window(w: u32, h: u32, base: u32) -> (u32, u32) {
    let need = w.max(h);
    let (mut index, mut side) = (1, base);
    while side < need {
        index += 1;
        side *= 2;
    }
    (index, side)
}

/// Every interior voxel compared against its 26 neighbours one by one.
/// Returns (octave, level, x, y) in original-image pixels.
pub fn brute_extrema(dog: &DogStack, threshold: f64) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for oct in &dog.octaves {
        for i in 1..oct.levels.len() - 1 {
            let here = &oct.levels[i];
            for y in 1..here.height - 1 {
                for x in 1..here.width - 1 {
                    let v = here.get(x, y);
                    let (mut above_all, mut below_all) = (true, true);
                    for l in i - 1..=i + 1 {
                        for ny in y - 1..=y + 1 {
                            for nx in x - 1..=x + 1 {
                                if l == i && nx == x && ny == y {
                                    continue;
                                }
                                let n = oct.levels[l].get(nx, ny);
                                above_all &= v > n;
                                below_all &= v < n;
                            }
                        }
                    }
                    if (above_all || below_all) && v.abs() >= threshold {
                        out.push((oct.index, i, x << oct.index, y << oct.index));
                    }
                }
            }
        }
    }
    out
}

/// Index and distance of the closest vector; earliest wins ties.
pub fn linear_nearest(members: &[FeatureVector], q: &FeatureVector) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, m) in members.iter().enumerate() {
        let d = m
            .as_slice()
            .iter()
            .zip(q.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn random_fv(rng: &mut ChaCha8Rng, dim: usize) -> FeatureVector {
    FeatureVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
}
