//! Gaussian scale space, difference-of-Gaussian stack and 26-neighbour
//! scale-space extrema.
//!
//! Every octave starts from a seed image. In octave 0 the seed is the input
//! (taken as unblurred); later seeds are every-second-pixel subsamples of the
//! previous octave's level with blur `2 * sigma0`, which carries blur
//! `sigma0` at the new resolution. Level `i` of an octave has blur
//! `sigma0 * k^i` in that octave's pixels and is produced by blurring the
//! seed once with `sqrt((sigma0 k^i)^2 - sigma_seed^2)`, so the stack is an
//! exact linear function of the seed.

use serde::{Deserialize, Serialize};

use crate::image::GrayImage;

/// Octaves narrower or shorter than this are dropped.
pub const MIN_OCTAVE_SIDE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSpaceParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma0: f64,
}

impl Default for ScaleSpaceParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            scales_per_octave: 2,
            sigma0: 1.6,
        }
    }
}

impl ScaleSpaceParams {
    /// Constant factor between adjacent levels, `2^(1/s)`.
    pub fn k(&self) -> f64 {
        2f64.powf(1.0 / self.scales_per_octave as f64)
    }

    fn validate(&self) {
        assert!(self.octaves >= 1, "at least one octave");
        assert!(self.scales_per_octave >= 1, "at least one scale per octave");
        assert!(self.sigma0 > 0.0, "sigma0 must be positive");
    }
}

/// Real-valued raster, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "data length must be width * height");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    /// Intensities scaled to `[0, 1]`.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self::new(img.width(), img.height(), img.to_unit_f64())
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Every second pixel in both directions: `floor(w/2) x floor(h/2)`.
    pub fn downsample(&self) -> FloatImage {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.get(2 * x, 2 * y));
            }
        }
        FloatImage::new(w, h, data)
    }

    pub fn max_abs_diff(&self, other: &FloatImage) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sampled Gaussian truncated at `ceil(3 sigma)` and renormalized to sum 1.
/// `sigma == 0` gives the unit impulse.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with replicate border.
pub fn gaussian_blur(img: &FloatImage, sigma: f64) -> FloatImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);

    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * img.clamped(x as isize + i as isize - r, y as isize);
            }
            horizontal[y * w + x] = acc;
        }
    }
    let horizontal = FloatImage::new(w, h, horizontal);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * horizontal.clamped(x as isize, y as isize + i as isize - r);
            }
            out[y * w + x] = acc;
        }
    }
    FloatImage::new(w, h, out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Octave {
    pub index: usize,
    /// The image every level of this octave is blurred from.
    pub seed: FloatImage,
    /// Blur already present in the seed, in this octave's pixels.
    pub seed_sigma: f64,
    /// `sigma0 * k^i`, in this octave's pixels.
    pub sigmas: Vec<f64>,
    /// Blur applied to the seed to reach each level.
    pub applied: Vec<f64>,
    pub levels: Vec<FloatImage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSpace {
    pub params: ScaleSpaceParams,
    pub octaves: Vec<Octave>,
}

pub fn build_scale_space(img: &FloatImage, params: &ScaleSpaceParams) -> ScaleSpace {
    params.validate();
    let s = params.scales_per_octave;
    let k = params.k();
    let sigmas: Vec<f64> = (0..s + 3).map(|i| params.sigma0 * k.powi(i as i32)).collect();

    let mut octaves: Vec<Octave> = Vec::with_capacity(params.octaves);
    let mut seed = img.clone();
    let mut seed_sigma = 0.0;
    for o in 0..params.octaves {
        if o > 0 {
            let prev = octaves.last().expect("previous octave");
            let next = prev.levels[s].downsample();
            if next.width < MIN_OCTAVE_SIDE || next.height < MIN_OCTAVE_SIDE {
                break;
            }
            seed = next;
            seed_sigma = params.sigma0;
        }
        let applied: Vec<f64> = sigmas
            .iter()
            .map(|&t| (t * t - seed_sigma * seed_sigma).max(0.0).sqrt())
            .collect();
        let levels = applied.iter().map(|&a| gaussian_blur(&seed, a)).collect();
        octaves.push(Octave {
            index: o,
            seed: seed.clone(),
            seed_sigma,
            sigmas: sigmas.clone(),
            applied,
            levels,
        });
    }
    ScaleSpace {
        params: params.clone(),
        octaves,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DogOctave {
    pub index: usize,
    /// Blur of the lower level of each difference, in this octave's pixels.
    pub sigmas: Vec<f64>,
    pub levels: Vec<FloatImage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DogStack {
    pub octaves: Vec<DogOctave>,
}

/// `D_i = L_{i+1} - L_i` per octave.
pub fn build_dog(ss: &ScaleSpace) -> DogStack {
    let octaves = ss
        .octaves
        .iter()
        .map(|oct| DogOctave {
            index: oct.index,
            sigmas: oct.sigmas[..oct.sigmas.len() - 1].to_vec(),
            levels: oct
                .levels
                .windows(2)
                .map(|pair| {
                    let (lo, hi) = (&pair[0], &pair[1]);
                    let data = hi.data.iter().zip(&lo.data).map(|(a, b)| a - b).collect();
                    FloatImage::new(lo.width, lo.height, data)
                })
                .collect(),
        })
        .collect();
    DogStack { octaves }
}

/// Recomputes every DoG level as one non-separable 2-D convolution of the
/// octave seed with `G(applied_{i+1}) - G(applied_i)` and returns the largest
/// absolute deviation from the stack.
pub fn dog_two_path_error(ss: &ScaleSpace, dog: &DogStack) -> f64 {
    let mut worst: f64 = 0.0;
    for (oct, doct) in ss.octaves.iter().zip(&dog.octaves) {
        for (i, d) in doct.levels.iter().enumerate() {
            let kernel = difference_kernel(oct.applied[i + 1], oct.applied[i]);
            let direct = convolve_2d(&oct.seed, &kernel);
            worst = worst.max(direct.max_abs_diff(d));
        }
    }
    worst
}

/// Square `(2r+1)^2` kernel `g_a (x) g_a - g_b (x) g_b`.
fn difference_kernel(sigma_a: f64, sigma_b: f64) -> FloatImage {
    let (ka, kb) = (gaussian_kernel(sigma_a), gaussian_kernel(sigma_b));
    let r = ka.len().max(kb.len()) / 2;
    let side = 2 * r + 1;
    let tap = |k: &[f64], i: usize| -> f64 {
        let kr = k.len() / 2;
        let off = i as isize - r as isize + kr as isize;
        if off >= 0 && (off as usize) < k.len() {
            k[off as usize]
        } else {
            0.0
        }
    };
    let mut data = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            data[y * side + x] = tap(&ka, y) * tap(&ka, x) - tap(&kb, y) * tap(&kb, x);
        }
    }
    FloatImage::new(side, side, data)
}

fn convolve_2d(img: &FloatImage, kernel: &FloatImage) -> FloatImage {
    let r = (kernel.width / 2) as isize;
    let mut out = vec![0.0; img.width * img.height];
    for y in 0..img.height {
        for x in 0..img.width {
            let mut acc = 0.0;
            for ky in 0..kernel.height {
                for kx in 0..kernel.width {
                    acc += kernel.get(kx, ky)
                        * img.clamped(x as isize + kx as isize - r, y as isize + ky as isize - r);
                }
            }
            out[y * img.width + x] = acc;
        }
    }
    FloatImage::new(img.width, img.height, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Position in original-image pixels.
    pub x: f64,
    pub y: f64,
    pub octave: usize,
    /// DoG level within the octave.
    pub scale_index: usize,
    /// Blur of the level in original-image pixels.
    pub sigma: f64,
    pub response: f64,
    pub polarity: Polarity,
}

/// Pixels strictly above or strictly below all 26 scale-space neighbours,
/// off the image border, with `|D| >= contrast_threshold`. Ordered by octave,
/// level, row, column.
pub fn detect_extrema(dog: &DogStack, contrast_threshold: f64) -> Vec<Keypoint> {
    let mut out = Vec::new();
    for oct in &dog.octaves {
        let scale = (1usize << oct.index) as f64;
        for i in 1..oct.levels.len().saturating_sub(1) {
            let (below, here, above) = (&oct.levels[i - 1], &oct.levels[i], &oct.levels[i + 1]);
            let (w, h) = (here.width, here.height);
            if w < 3 || h < 3 {
                continue;
            }
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = here.get(x, y);
                    if v.abs() < contrast_threshold {
                        continue;
                    }
                    let Some(polarity) = extremum(v, x, y, [below, here, above]) else {
                        continue;
                    };
                    out.push(Keypoint {
                        x: x as f64 * scale,
                        y: y as f64 * scale,
                        octave: oct.index,
                        scale_index: i,
                        sigma: oct.sigmas[i] * scale,
                        response: v,
                        polarity,
                    });
                }
            }
        }
    }
    out
}

fn extremum(v: f64, x: usize, y: usize, planes: [&FloatImage; 3]) -> Option<Polarity> {
    let (mut is_max, mut is_min) = (true, true);
    for (p, plane) in planes.iter().enumerate() {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if p == 1 && nx == x && ny == y {
                    continue;
                }
                let n = plane.get(nx, ny);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return None;
                }
            }
        }
    }
    if is_max {
        Some(Polarity::Max)
    } else {
        Some(Polarity::Min)
    }
}

/// Count, mean sigma and mean absolute response of a keypoint set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KeypointStats {
    pub count: usize,
    pub mean_sigma: f64,
    pub mean_abs_response: f64,
}

impl KeypointStats {
    pub fn as_array(&self) -> [f64; 3] {
        [self.count as f64, self.mean_sigma, self.mean_abs_response]
    }
}

pub fn keypoint_stats(keypoints: &[Keypoint]) -> KeypointStats {
    if keypoints.is_empty() {
        return KeypointStats::default();
    }
    let n = keypoints.len() as f64;
    KeypointStats {
        count: keypoints.len(),
        mean_sigma: keypoints.iter().map(|k| k.sigma).sum::<f64>() / n,
        mean_abs_response: keypoints.iter().map(|k| k.response.abs()).sum::<f64>() / n,
    }
}

/// Full detector: scale space, DoG stack, extrema.
pub fn detect_keypoints(img: &FloatImage, params: &ScaleSpaceParams, contrast_threshold: f64) -> Vec<Keypoint> {
    let ss = build_scale_space(img, params);
    detect_extrema(&build_dog(&ss), contrast_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> FloatImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FloatImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect())
    }

    #[test]
    fn blur_sigma_zero_is_identity() {
        let img = random_image(13, 9, 1);
        assert_eq!(gaussian_blur(&img, 0.0), img);
    }

    #[test]
    fn blur_constant_image() {
        let img = FloatImage::filled(20, 17, 0.37);
        for sigma in [0.5, 1.6, 3.3, 7.0] {
            let out = gaussian_blur(&img, sigma);
            assert!(out.data.iter().all(|v| (v - 0.37).abs() <= 1e-12));
        }
    }

    #[test]
    fn blur_impulse_reproduces_kernel() {
        let mut img = FloatImage::filled(33, 33, 0.0);
        img.data[16 * 33 + 16] = 1.0;
        let out = gaussian_blur(&img, 2.0);
        // truncated at ceil(3 * 2) = 6, renormalized, evaluated directly
        let raw: Vec<f64> = (-6..=6).map(|x: i32| (-(x * x) as f64 / 8.0).exp()).collect();
        let sum: f64 = raw.iter().sum();
        let g: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        for x in 0..33 {
            let dx = x as i32 - 16;
            let expected = if dx.abs() <= 6 { g[6] * g[(dx + 6) as usize] } else { 0.0 };
            assert!((out.get(x, 16) - expected).abs() <= 1e-10);
        }
    }

    #[test]
    fn octave_sizes_halve() {
        let ss = build_scale_space(&random_image(64, 64, 2), &ScaleSpaceParams { octaves: 3, ..Default::default() });
        let sizes: Vec<usize> = ss.octaves.iter().map(|o| o.levels[0].width).collect();
        assert_eq!(sizes, vec![64, 32, 16]);

        let ss = build_scale_space(&random_image(70, 37, 2), &ScaleSpaceParams { octaves: 6, ..Default::default() });
        for o in &ss.octaves {
            assert_eq!((o.seed.width, o.seed.height), (70 >> o.index, 37 >> o.index));
        }
        assert_eq!(ss.octaves.len(), 3);

        // too small for a second octave, still one
        let ss = build_scale_space(&random_image(9, 9, 2), &ScaleSpaceParams::default());
        assert_eq!(ss.octaves.len(), 1);
    }

    #[test]
    fn levels_carry_target_blur() {
        let img = random_image(40, 40, 3);
        let params = ScaleSpaceParams::default();
        let ss = build_scale_space(&img, &params);
        let k = params.k();
        for (i, level) in ss.octaves[0].levels.iter().enumerate() {
            let direct = gaussian_blur(&img, params.sigma0 * k.powi(i as i32));
            assert!(level.max_abs_diff(&direct) <= 1e-6);
        }
        // octave 1 seed is the subsampled 2*sigma0 level of octave 0
        assert_eq!(ss.octaves[1].seed, ss.octaves[0].levels[2].downsample());
        assert!((ss.octaves[0].sigmas[2] - 2.0 * params.sigma0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_gives_constant_levels_and_zero_dog() {
        let img = FloatImage::filled(32, 32, 0.6);
        let ss = build_scale_space(&img, &ScaleSpaceParams::default());
        for o in &ss.octaves {
            for l in &o.levels {
                assert!(l.data.iter().all(|v| (v - 0.6).abs() <= 1e-12));
            }
        }
        let dog = build_dog(&ss);
        for o in &dog.octaves {
            for l in &o.levels {
                assert!(l.data.iter().all(|v| v.abs() <= 1e-12));
            }
        }
        assert!(detect_extrema(&dog, 0.0).is_empty());
    }

    #[test]
    fn dog_is_exact_difference() {
        let ss = build_scale_space(&random_image(24, 24, 4), &ScaleSpaceParams::default());
        let dog = build_dog(&ss);
        for (o, d) in ss.octaves.iter().zip(&dog.octaves) {
            assert_eq!(d.levels.len(), o.levels.len() - 1);
            for i in 0..d.levels.len() {
                for p in 0..d.levels[i].data.len() {
                    assert_eq!(d.levels[i].data[p], o.levels[i + 1].data[p] - o.levels[i].data[p]);
                }
            }
        }
    }

    #[test]
    fn dog_two_paths_agree() {
        let ss = build_scale_space(&random_image(32, 32, 5), &ScaleSpaceParams::default());
        let dog = build_dog(&ss);
        assert!(dog_two_path_error(&ss, &dog) <= 1e-6);
    }

    #[test]
    fn gaussian_blob_is_detected_near_centre() {
        let (w, h) = (64usize, 64usize);
        let (cx, cy, s) = (31.0, 33.0, 4.0);
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
            })
            .collect();
        let kps = detect_keypoints(&FloatImage::new(w, h, data), &ScaleSpaceParams::default(), 0.015);
        assert!(
            kps.iter().any(|k| {
                ((k.x - cx).powi(2) + (k.y - cy).powi(2)).sqrt() <= 3.0 && (2.0..=8.0).contains(&k.sigma)
            }),
            "{kps:?}"
        );
    }

    #[test]
    fn stats_examples() {
        assert_eq!(keypoint_stats(&[]), KeypointStats::default());
        let kp = |sigma, response| Keypoint {
            x: 0.0,
            y: 0.0,
            octave: 0,
            scale_index: 1,
            sigma,
            response,
            polarity: Polarity::Min,
        };
        assert_eq!(
            keypoint_stats(&[kp(2.0, -0.3)]),
            KeypointStats { count: 1, mean_sigma: 2.0, mean_abs_response: 0.3 }
        );
        let s = keypoint_stats(&[kp(2.0, 0.2), kp(4.0, -0.4)]);
        assert_eq!((s.count, s.mean_sigma), (2, 3.0));
        assert!((s.mean_abs_response - 0.3).abs() < 1e-15);
    }

    /// Brute force over every interior voxel with explicit 26-neighbour sets.
    #[test]
    fn extrema_match_brute_force() {
        for seed in 0..4 {
            let img = random_image(40, 36, 100 + seed);
            let dog = build_dog(&build_scale_space(&img, &ScaleSpaceParams::default()));
            let mut expected = Vec::new();
            for oct in &dog.octaves {
                for i in 1..oct.levels.len() - 1 {
                    let (w, h) = (oct.levels[i].width, oct.levels[i].height);
                    for y in 1..h - 1 {
                        for x in 1..w - 1 {
                            let v = oct.levels[i].get(x, y);
                            let mut neighbours = Vec::new();
                            for di in [i - 1, i, i + 1] {
                                for dy in [y - 1, y, y + 1] {
                                    for dx in [x - 1, x, x + 1] {
                                        if !(di == i && dy == y && dx == x) {
                                            neighbours.push(oct.levels[di].get(dx, dy));
                                        }
                                    }
                                }
                            }
                            assert_eq!(neighbours.len(), 26);
                            let max = neighbours.iter().all(|&n| v > n);
                            let min = neighbours.iter().all(|&n| v < n);
                            if (max || min) && v.abs() >= 0.015 {
                                expected.push((oct.index, i, x << oct.index, y << oct.index));
                            }
                        }
                    }
                }
            }
            let got: Vec<_> = detect_extrema(&dog, 0.015)
                .iter()
                .map(|k| (k.octave, k.scale_index, k.x as usize, k.y as usize))
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn octave_zero_extrema_follow_translation() {
        let mut base = FloatImage::filled(48, 48, 0.0);
        for (cx, cy) in [(14.0, 16.0), (24.0, 22.0)] {
            for y in 0..48 {
                for x in 0..48 {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    base.data[y * 48 + x] += (-d2 / 8.0).exp();
                }
            }
        }
        let mut shifted = FloatImage::filled(64, 64, 0.0);
        for y in 0..48 {
            for x in 0..48 {
                shifted.data[(y + 8) * 64 + x + 8] = base.get(x, y);
            }
        }
        let mut big = FloatImage::filled(64, 64, 0.0);
        for y in 0..48 {
            for x in 0..48 {
                big.data[y * 64 + x] = base.get(x, y);
            }
        }
        let params = ScaleSpaceParams { octaves: 1, ..Default::default() };
        let a: Vec<_> = detect_keypoints(&big, &params, 0.015)
            .into_iter()
            .filter(|k| k.x < 40.0 && k.y < 40.0)
            .map(|k| (k.scale_index, k.x + 8.0, k.y + 8.0))
            .collect();
        let b: Vec<_> = detect_keypoints(&shifted, &params, 0.015)
            .into_iter()
            .filter(|k| k.x >= 8.0 && k.y >= 8.0 && k.x < 48.0 && k.y < 48.0)
            .map(|k| (k.scale_index, k.x, k.y))
            .collect();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn detection_is_deterministic() {
        let img = random_image(50, 50, 8);
        let params = ScaleSpaceParams::default();
        assert_eq!(detect_keypoints(&img, &params, 0.01), detect_keypoints(&img, &params, 0.01));
    }

}
