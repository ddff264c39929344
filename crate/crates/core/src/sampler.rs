//! Cross-image patch sampling: varied sizes, IoU overlap filtering, central
//! pixel labeling, bilinear resize to a fixed side.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{seeded_rng, sub_seed, LabeledImage, Patch, Rect, RunConfig};
use crate::error::{Error, Result};

/// Rejection-sampling attempt budget, per requested patch.
const ATTEMPTS_PER_PATCH: usize = 10;

/// Patches sampled from one batch of images, grouped in image order.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub patches: Vec<Patch>,
    pub per_image_counts: Vec<usize>,
}

impl SampleBatch {
    pub fn labels(&self) -> Vec<u32> {
        self.patches.iter().map(|p| p.label).collect()
    }
}

/// Intersection-over-union of two rectangles; 0 when disjoint, 1 iff equal.
pub fn rect_iou(a: &Rect, b: &Rect) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w).saturating_sub(a.x.max(b.x));
    let iy = (a.y + a.h).min(b.y + b.h).saturating_sub(a.y.max(b.y));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Label of the rect's central pixel (floor division on both axes).
pub fn central_label(image: &LabeledImage, r: &Rect) -> u32 {
    let (cx, cy) = r.center();
    image.label(cx, cy)
}

/// Sample up to `cfg.patches_per_image` patches from each image.
///
/// Patch sides are drawn uniformly from `patch_scale_range x min(H, W)` and
/// positions uniformly over valid placements. A candidate is rejected when
/// its center carries the ignore label or when its IoU with an already
/// accepted patch of the same image exceeds `overlap_iou_max`. Accepted
/// patches are bilinearly resized to `patch_resize`.
///
/// Each image draws from its own sub-stream, so results do not depend on
/// processing order.
pub fn sample_patches(
    images: &[LabeledImage],
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SampleBatch> {
    cfg.validate()?;
    let base: u64 = rng.gen();
    let mut patches = Vec::new();
    let mut per_image_counts = Vec::with_capacity(images.len());
    for (index, image) in images.iter().enumerate() {
        let mut image_rng = seeded_rng(sub_seed(base, index as u64));
        let accepted = sample_image(image, index, cfg, &mut image_rng);
        per_image_counts.push(accepted.len());
        patches.extend(accepted);
    }
    if patches.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(SampleBatch {
        patches,
        per_image_counts,
    })
}

fn sample_image(
    image: &LabeledImage,
    image_index: usize,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Patch> {
    let min_dim = image.width.min(image.height);
    let (lo_frac, hi_frac) = cfg.patch_scale_range;
    let lo = ((lo_frac * min_dim as f64).round() as usize).max(1);
    let hi = ((hi_frac * min_dim as f64).round() as usize).clamp(lo, min_dim);

    let mut rects: Vec<Rect> = Vec::new();
    let mut patches = Vec::new();
    for _ in 0..cfg.patches_per_image * ATTEMPTS_PER_PATCH {
        if patches.len() == cfg.patches_per_image {
            break;
        }
        let side = rng.gen_range(lo..=hi);
        let x = rng.gen_range(0..=image.width - side);
        let y = rng.gen_range(0..=image.height - side);
        let rect = Rect::new(x, y, side, side);
        let label = central_label(image, &rect);
        if image.is_ignored(label) {
            continue;
        }
        if rects
            .iter()
            .any(|r| rect_iou(r, &rect) > cfg.overlap_iou_max)
        {
            continue;
        }
        let pixels = resize_bilinear(image, &rect, cfg.patch_resize);
        rects.push(rect);
        patches.push(Patch {
            pixels,
            side: cfg.patch_resize,
            channels: image.channels,
            label,
            source: (image_index, rect),
        });
    }
    patches
}

/// Bilinear resample of the rect's pixels to a `target x target` block.
fn resize_bilinear(image: &LabeledImage, r: &Rect, target: usize) -> Vec<f64> {
    let channels = image.channels;
    let mut out = vec![0.0; target * target * channels];
    let scale_x = r.w as f64 / target as f64;
    let scale_y = r.h as f64 / target as f64;
    for oy in 0..target {
        let fy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (r.h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(r.h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..target {
            let fx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (r.w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(r.w - 1);
            let wx = fx - x0 as f64;
            for c in 0..channels {
                let p00 = image.pixel(r.x + x0, r.y + y0, c);
                let p10 = image.pixel(r.x + x1, r.y + y0, c);
                let p01 = image.pixel(r.x + x0, r.y + y1, c);
                let p11 = image.pixel(r.x + x1, r.y + y1, c);
                let top = p00 + wx * (p10 - p00);
                let bottom = p01 + wx * (p11 - p01);
                out[(oy * target + ox) * channels + c] = top + wy * (bottom - top);
            }
        }
    }
    out
}
