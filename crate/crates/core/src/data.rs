//! Domain types, dataset IO, synthetic data, and deterministic RNG plumbing.
//!
//! Datasets are pairs of binary netpbm files: `image_k.ppm` (P6, 8-bit RGB)
//! and `label_k.pgm` (P5, 8-bit class index). Label value 255 is reserved as
//! the ignore label; pixels carrying it are excluded from supervision.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Label value reserved for unlabeled / boundary pixels.
pub const IGNORE_LABEL: u32 = 255;

/// RNG stream tags. Each consumer derives its own stream via [`sub_seed`]
/// so that, e.g., both triplet strategies see identical patch sampling.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const TRIPLETS: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const SYNTH: u64 = 5;
}

/// Derive an independent sub-seed from a master seed and a stream tag
/// (splitmix64 finalizer).
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for a seed. All randomness flows through this.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An image with a per-pixel class-label map.
///
/// `pixels` is row-major with interleaved channels, index
/// `(y * width + x) * channels + c`, intensities in `[0, 1]`. `labels` is
/// row-major `height * width`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
    pub labels: Vec<u32>,
    pub ignore_label: Option<u32>,
}

impl LabeledImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f64>,
        labels: Vec<u32>,
        ignore_label: Option<u32>,
    ) -> Result<Self> {
        if pixels.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                got: pixels.len(),
            });
        }
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            labels,
            ignore_label,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn is_ignored(&self, label: u32) -> bool {
        self.ignore_label == Some(label)
    }

    /// Distinct non-ignore labels, in ascending order.
    pub fn distinct_labels(&self) -> BTreeSet<u32> {
        self.labels
            .iter()
            .copied()
            .filter(|&l| !self.is_ignored(l))
            .collect()
    }
}

/// Distinct non-ignore labels across a whole dataset.
pub fn dataset_labels(images: &[LabeledImage]) -> BTreeSet<u32> {
    let mut all = BTreeSet::new();
    for img in images {
        all.extend(img.distinct_labels());
    }
    all
}

/// Axis-aligned pixel rectangle: top-left `(x, y)`, extent `w x h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Whether the rect lies inside a `width x height` image and is non-empty.
    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    /// Central pixel, floor division.
    pub fn center(&self) -> (usize, usize) {
        (self.x + self.w / 2, self.y + self.h / 2)
    }
}

/// A cropped and resized pixel block carrying the class label of its source
/// center pixel. Layout matches [`LabeledImage::pixels`] with `side x side`
/// extent.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Vec<f64>,
    pub side: usize,
    pub channels: usize,
    pub label: u32,
    /// (index of the host image in the sampled batch, source rectangle)
    pub source: (usize, Rect),
}

/// A d-dimensional embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Knobs for one tuning run. `Default` is the desk-scale setup; the
/// full-scale values (128px patches, 8000 iterations) remain valid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub images_per_batch: usize,
    pub patches_per_image: usize,
    pub patch_resize: usize,
    pub margin_alpha: f64,
    pub embed_dim: usize,
    /// Piecewise-constant schedule: (first iteration, rate), ascending.
    pub learning_rate_schedule: Vec<(usize, f64)>,
    pub iterations: usize,
    pub overlap_iou_max: f64,
    /// Patch side range as fractions of min(H, W).
    pub patch_scale_range: (f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            images_per_batch: 16,
            patches_per_image: 10,
            patch_resize: 32,
            margin_alpha: 2.1,
            embed_dim: 32,
            learning_rate_schedule: two_phase_schedule(400),
            iterations: 400,
            overlap_iou_max: 0.5,
            patch_scale_range: (0.2, 0.6),
        }
    }
}

/// 0.01 for the first three quarters of the run, 0.001 after.
pub fn two_phase_schedule(iterations: usize) -> Vec<(usize, f64)> {
    let drop_at = iterations * 3 / 4;
    if drop_at == 0 {
        vec![(0, 0.01)]
    } else {
        vec![(0, 0.01), (drop_at, 0.001)]
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.images_per_batch < 1 {
            return Err(Error::Config("images_per_batch must be >= 1".into()));
        }
        if self.patches_per_image < 1 {
            return Err(Error::Config("patches_per_image must be >= 1".into()));
        }
        if self.patch_resize < 1 {
            return Err(Error::Config("patch_resize must be >= 1".into()));
        }
        if self.margin_alpha.is_nan() || self.margin_alpha < 0.0 {
            return Err(Error::Config("margin_alpha must be >= 0".into()));
        }
        if self.embed_dim < 1 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_iou_max) {
            return Err(Error::Config("overlap_iou_max must be in [0, 1]".into()));
        }
        let (lo, hi) = self.patch_scale_range;
        let range_ok = lo > 0.0 && lo <= hi && hi <= 1.0;
        if !range_ok {
            return Err(Error::Config(
                "patch_scale_range requires 0 < min <= max <= 1".into(),
            ));
        }
        if self.learning_rate_schedule.is_empty() {
            return Err(Error::Config("learning rate schedule is empty".into()));
        }
        if self.learning_rate_schedule[0].0 != 0 {
            return Err(Error::Config(
                "learning rate schedule must start at iteration 0".into(),
            ));
        }
        let mut prev = None;
        for &(it, rate) in &self.learning_rate_schedule {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!("learning rate {rate} at {it}")));
            }
            if let Some(p) = prev {
                if it <= p {
                    return Err(Error::Config(
                        "learning rate schedule iterations must ascend".into(),
                    ));
                }
            }
            prev = Some(it);
        }
        Ok(())
    }

    /// Rate in effect at `iteration` (last schedule entry not after it).
    pub fn rate_at(&self, iteration: usize) -> f64 {
        let mut rate = self.learning_rate_schedule[0].1;
        for &(start, r) in &self.learning_rate_schedule {
            if start <= iteration {
                rate = r;
            }
        }
        rate
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

// ---------------------------------------------------------------------------
// Netpbm IO
// ---------------------------------------------------------------------------

struct Pnm {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Parse a binary PGM (P5) or PPM (P6) with an 8-bit max value.
fn read_pnm(path: &Path, magic: &str, channels: usize) -> Result<Pnm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Dataset(format!("malformed {} ({reason})", path.display()));

    if bytes.len() < 2 || &bytes[0..2] != magic.as_bytes() {
        return Err(bad(&format!("expected {magic} magic")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and '#' comment lines
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(bad("expected integer in header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are utf8");
        *field = text.parse().map_err(|_| bad("header value overflow"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad("only 8-bit (maxval 255) files are supported"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing whitespace after header")),
    }
    let expected = width * height * channels;
    let data = &bytes[pos..];
    if data.len() != expected {
        return Err(bad(&format!(
            "pixel payload is {} bytes, expected {expected}",
            data.len()
        )));
    }
    Ok(Pnm {
        width,
        height,
        data: data.to_vec(),
    })
}

fn write_pnm(path: &Path, magic: &str, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load all `image_k.ppm` / `label_k.pgm` pairs from `root`, for k = 0, 1, ...
///
/// Intensities are divided by 255; label 255 maps to the ignore label.
pub fn load_dataset(root: &Path) -> Result<Vec<LabeledImage>> {
    let mut images = Vec::new();
    for k in 0.. {
        let img_path = root.join(format!("image_{k}.ppm"));
        let lbl_path = root.join(format!("label_{k}.pgm"));
        match (img_path.exists(), lbl_path.exists()) {
            (false, false) => break,
            (true, true) => {}
            (true, false) => {
                return Err(Error::Dataset(format!(
                    "missing pair: {} has no matching {}",
                    img_path.display(),
                    lbl_path.display()
                )))
            }
            (false, true) => {
                return Err(Error::Dataset(format!(
                    "missing pair: {} has no matching {}",
                    lbl_path.display(),
                    img_path.display()
                )))
            }
        }
        let img = read_pnm(&img_path, "P6", 3)?;
        let lbl = read_pnm(&lbl_path, "P5", 1)?;
        if img.width != lbl.width || img.height != lbl.height {
            return Err(Error::Dataset(format!(
                "dimension mismatch: {} is {}x{} but {} is {}x{}",
                img_path.display(),
                img.width,
                img.height,
                lbl_path.display(),
                lbl.width,
                lbl.height
            )));
        }
        let pixels = img.data.iter().map(|&b| f64::from(b) / 255.0).collect();
        let labels = lbl.data.iter().map(|&b| u32::from(b)).collect();
        images.push(LabeledImage::new(
            img.width,
            img.height,
            3,
            pixels,
            labels,
            Some(IGNORE_LABEL),
        )?);
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!(
            "no image_k.ppm / label_k.pgm pairs found in {}",
            root.display()
        )));
    }
    Ok(images)
}

/// Write the paired PPM/PGM layout read by [`load_dataset`].
///
/// Lossless on labels; pixel intensities quantize to 8 bits.
pub fn write_dataset(images: &[LabeledImage], root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for (k, img) in images.iter().enumerate() {
        if img.channels != 3 {
            return Err(Error::Dataset(format!(
                "image {k} has {} channels; PPM output requires 3",
                img.channels
            )));
        }
        if let Some(&bad) = img.labels.iter().find(|&&l| l > 255) {
            return Err(Error::Dataset(format!(
                "image {k} carries label {bad}, which does not fit in 8 bits"
            )));
        }
        let pixel_bytes: Vec<u8> = img
            .pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let label_bytes: Vec<u8> = img.labels.iter().map(|&l| l as u8).collect();
        write_pnm(
            &root.join(format!("image_{k}.ppm")),
            "P6",
            img.width,
            img.height,
            &pixel_bytes,
        )?;
        write_pnm(
            &root.join(format!("label_{k}.pgm")),
            "P5",
            img.width,
            img.height,
            &label_bytes,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Base color for a class, spread around the hue wheel by the golden angle.
fn class_color(class: u32) -> [f64; 3] {
    let hue = (class as f64 * 0.618_033_988_749_895).fract() * 360.0;
    hsv_to_rgb(hue, 0.7, 0.75)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Generate `num_images` synthetic images of `(height, width)`: a background
/// class plus 1-3 filled shapes per image, each class with a distinct base
/// color and per-pixel noise. Pure function of `seed`.
pub fn make_synthetic(
    num_images: usize,
    num_classes: u32,
    size: (usize, usize),
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    if num_classes < 2 {
        return Err(Error::Config(
            "num_classes must be >= 2 (triplets need at least two classes)".into(),
        ));
    }
    let (height, width) = size;
    if width < 4 || height < 4 {
        return Err(Error::Config(
            "synthetic images must be at least 4x4".into(),
        ));
    }
    let base_seed = sub_seed(seed, streams::SYNTH);
    let mut images = Vec::with_capacity(num_images);
    for i in 0..num_images {
        let mut rng = seeded_rng(sub_seed(base_seed, i as u64));
        images.push(synthetic_image(width, height, num_classes, &mut rng));
    }
    Ok(images)
}

fn synthetic_image(
    width: usize,
    height: usize,
    num_classes: u32,
    rng: &mut ChaCha8Rng,
) -> LabeledImage {
    let mut pixels = vec![0.0; width * height * 3];
    let mut labels = vec![0u32; width * height];
    let bg = class_color(0);
    for y in 0..height {
        for x in 0..width {
            paint(&mut pixels, width, x, y, bg, rng);
        }
    }

    let min_dim = width.min(height);
    let num_shapes = rng.gen_range(1..=3);
    let mut placed: Vec<(usize, usize, usize, usize)> = Vec::new();
    for _ in 0..num_shapes {
        let class = rng.gen_range(1..num_classes);
        let color = class_color(class);
        // resample positions so shapes keep disjoint bounding boxes
        let mut shape = None;
        for _ in 0..10 {
            let half_w = rng.gen_range((min_dim / 6).max(1)..=(min_dim / 3).max(1));
            let half_h = rng.gen_range((min_dim / 6).max(1)..=(min_dim / 3).max(1));
            let cx = rng.gen_range(half_w..width - half_w);
            let cy = rng.gen_range(half_h..height - half_h);
            let disjoint = placed.iter().all(|&(px, py, pw, ph)| {
                cx + half_w < px.saturating_sub(pw)
                    || px + pw < cx.saturating_sub(half_w)
                    || cy + half_h < py.saturating_sub(ph)
                    || py + ph < cy.saturating_sub(half_h)
            });
            if disjoint {
                shape = Some((cx, cy, half_w, half_h));
                break;
            }
        }
        let Some((cx, cy, half_w, half_h)) = shape else {
            continue;
        };
        placed.push((cx, cy, half_w, half_h));
        let ellipse = rng.gen_bool(0.5);
        for y in cy - half_h..=cy + half_h {
            for x in cx - half_w..=cx + half_w {
                let dx = (x as f64 - cx as f64) / half_w as f64;
                let dy = (y as f64 - cy as f64) / half_h as f64;
                if ellipse && dx * dx + dy * dy > 1.0 {
                    continue;
                }
                labels[y * width + x] = class;
                paint(&mut pixels, width, x, y, color, rng);
            }
        }
    }

    LabeledImage {
        width,
        height,
        channels: 3,
        pixels,
        labels,
        ignore_label: Some(IGNORE_LABEL),
    }
}

fn paint(
    pixels: &mut [f64],
    width: usize,
    x: usize,
    y: usize,
    color: [f64; 3],
    rng: &mut ChaCha8Rng,
) {
    for (c, &base) in color.iter().enumerate() {
        let noise = rng.gen_range(-0.05..0.05);
        pixels[(y * width + x) * 3 + c] = (base + noise).clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_image(width: usize, height: usize, label: u32) -> LabeledImage {
        LabeledImage::new(
            width,
            height,
            3,
            vec![0.5; width * height * 3],
            vec![label; width * height],
            Some(IGNORE_LABEL),
        )
        .unwrap()
    }

    #[test]
    fn sub_seed_streams_differ() {
        assert_ne!(sub_seed(7, streams::BATCH), sub_seed(7, streams::TRIPLETS));
        assert_ne!(sub_seed(7, streams::BATCH), sub_seed(8, streams::BATCH));
        assert_eq!(sub_seed(7, 2), sub_seed(7, 2));
    }

    #[test]
    fn rect_center_floor_division() {
        assert_eq!(Rect::new(3, 4, 1, 1).center(), (3, 4));
        assert_eq!(Rect::new(0, 0, 4, 4).center(), (2, 2));
        assert_eq!(Rect::new(2, 1, 5, 3).center(), (4, 2));
    }

    #[test]
    fn rate_at_follows_schedule() {
        let cfg = RunConfig {
            iterations: 400,
            learning_rate_schedule: two_phase_schedule(400),
            ..RunConfig::default()
        };
        assert_eq!(cfg.rate_at(0), 0.01);
        assert_eq!(cfg.rate_at(299), 0.01);
        assert_eq!(cfg.rate_at(300), 0.001);
        assert_eq!(cfg.rate_at(399), 0.001);
    }

    #[test]
    fn config_validation_rejects_bad_ranges() {
        let cases = [
            RunConfig {
                patch_scale_range: (0.6, 0.2),
                ..RunConfig::default()
            },
            RunConfig {
                overlap_iou_max: 1.5,
                ..RunConfig::default()
            },
            RunConfig {
                learning_rate_schedule: vec![(5, 0.01)],
                ..RunConfig::default()
            },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err());
        }
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn dataset_round_trip_is_lossless_on_labels() {
        let dir = tempfile::tempdir().unwrap();
        let images = make_synthetic(2, 3, (24, 32), 7).unwrap();
        write_dataset(&images, dir.path()).unwrap();
        assert!(dir.path().join("image_0.ppm").exists());
        assert!(dir.path().join("label_0.pgm").exists());
        assert!(dir.path().join("image_1.ppm").exists());

        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        for (orig, back) in images.iter().zip(&loaded) {
            assert_eq!(orig.width, back.width);
            assert_eq!(orig.height, back.height);
            assert_eq!(orig.labels, back.labels);
            for (a, b) in orig.pixels.iter().zip(&back.pixels) {
                assert!((a - b).abs() <= 1.0 / 255.0, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn load_maps_255_to_ignore() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = tiny_image(4, 4, 1);
        img.labels[5] = 255;
        write_dataset(&[img], dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded[0].ignore_label, Some(IGNORE_LABEL));
        assert!(loaded[0].is_ignored(loaded[0].labels[5]));
    }

    #[test]
    fn load_rejects_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_pnm(&dir.path().join("image_0.ppm"), "P6", 4, 4, &[0u8; 48]).unwrap();
        write_pnm(&dir.path().join("label_0.pgm"), "P5", 2, 2, &[0u8; 4]).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn load_rejects_missing_pair() {
        let dir = tempfile::tempdir().unwrap();
        write_pnm(&dir.path().join("image_0.ppm"), "P6", 2, 2, &[0u8; 12]).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("missing pair"), "{err}");
    }

    #[test]
    fn load_rejects_malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("image_0.ppm"), b"P3\n2 2\n255\nxxxx").unwrap();
        fs::write(dir.path().join("label_0.pgm"), b"P5\n2 2\n255\nabcd").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("image_0.ppm"), "{msg}");
    }

    #[test]
    fn load_rejects_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn write_rejects_wide_labels() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = tiny_image(4, 4, 1);
        img.labels[0] = 300;
        let err = write_dataset(&[img], dir.path()).unwrap_err();
        assert!(err.to_string().contains("300"), "{err}");
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = make_synthetic(4, 3, (64, 64), 7).unwrap();
        let b = make_synthetic(4, 3, (64, 64), 7).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic(4, 3, (64, 64), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_rejects_single_class() {
        assert!(make_synthetic(4, 1, (32, 32), 0).is_err());
    }

    #[test]
    fn synthetic_labels_stay_in_range() {
        let images = make_synthetic(16, 5, (64, 64), 1).unwrap();
        for img in &images {
            assert!(img.labels.iter().all(|&l| l < 5));
        }
    }

    #[test]
    fn synthetic_invariants_over_seeds() {
        for seed in 0..100 {
            let images = make_synthetic(2, 4, (16, 24), seed).unwrap();
            for img in &images {
                assert_eq!(img.pixels.len(), img.width * img.height * img.channels);
                assert_eq!(img.labels.len(), img.width * img.height);
                assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
                assert!(img.labels.iter().all(|&l| l < 4 || img.is_ignored(l)));
            }
        }
    }
}
