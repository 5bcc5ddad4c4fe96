//! Point-prompted leaf masks, per-image composite rasters, and isolation of
//! single leaves (rotate, crop, mask).

use std::collections::BTreeMap;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::leaf_locator::LeafCandidate;
use crate::raster::{self, Rotation, ON};

#[cfg(feature = "onnx")]
mod sam;
#[cfg(feature = "onnx")]
pub use sam::{SamConfig, SamPredictor};

/// Masks scoring below this are discarded.
pub const MIN_SCORE: f64 = 0.5;

/// Produces a binary mask (same size as the image) for the object under a
/// prompt point, with a confidence in `[0, 1]`.
pub trait MaskPredictor: Send + Sync {
    fn predict(&self, image: &RgbImage, point: (f64, f64)) -> Result<(GrayImage, f64)>;
}

impl<P: MaskPredictor + ?Sized> MaskPredictor for std::sync::Arc<P> {
    fn predict(&self, image: &RgbImage, point: (f64, f64)) -> Result<(GrayImage, f64)> {
        (**self).predict(image, point)
    }
}

/// Weight-free predictor: 4-connected flood fill from the prompt pixel over
/// pixels within `tolerance` of the seed color, followed by hole filling.
///
/// Colors are compared in the HSV cone `(s·v·cos h, s·v·sin h, v)`, so hue
/// differences fade out as saturation or value drop.
#[derive(Debug, Clone, Copy)]
pub struct RegionGrowPredictor {
    pub tolerance: f64,
    /// Regions smaller than this score 0.
    pub min_area: usize,
}

pub const DEFAULT_TOLERANCE: f64 = 0.1;

pub fn region_grow_predictor(tolerance: f64) -> Result<RegionGrowPredictor> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::InvalidInput("region-grow tolerance must be positive".into()));
    }
    Ok(RegionGrowPredictor {
        tolerance,
        min_area: 64,
    })
}

fn cone(px: [u8; 3]) -> [f64; 3] {
    let (h, s, v) = raster::rgb_to_hsv(px);
    let (sin, cos) = h.to_radians().sin_cos();
    [s * v * cos, s * v * sin, v]
}

/// Distance between two colors in the HSV cone.
pub fn hsv_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    let (a, b) = (cone(a), cone(b));
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl MaskPredictor for RegionGrowPredictor {
    fn predict(&self, image: &RgbImage, point: (f64, f64)) -> Result<(GrayImage, f64)> {
        let (w, h) = image.dimensions();
        let mut mask = GrayImage::new(w, h);
        let (px, py) = (point.0.floor(), point.1.floor());
        if !(px >= 0.0 && py >= 0.0 && px < f64::from(w) && py < f64::from(h)) {
            return Ok((mask, 0.0));
        }
        let seed = cone(image.get_pixel(px as u32, py as u32).0);
        let close = |p: [u8; 3]| {
            let c = cone(p);
            ((c[0] - seed[0]).powi(2) + (c[1] - seed[1]).powi(2) + (c[2] - seed[2]).powi(2)).sqrt()
                <= self.tolerance
        };
        let mut stack = vec![(px as u32, py as u32)];
        mask.put_pixel(px as u32, py as u32, Luma([ON]));
        while let Some((x, y)) = stack.pop() {
            let mut visit = |nx: u32, ny: u32| {
                if mask.get_pixel(nx, ny).0[0] == 0 && close(image.get_pixel(nx, ny).0) {
                    mask.put_pixel(nx, ny, Luma([ON]));
                    stack.push((nx, ny));
                }
            };
            if x > 0 {
                visit(x - 1, y);
            }
            if x + 1 < w {
                visit(x + 1, y);
            }
            if y > 0 {
                visit(x, y - 1);
            }
            if y + 1 < h {
                visit(x, y + 1);
            }
        }
        let mask = raster::fill_holes(&mask);
        let score = if raster::count_on(&mask) >= self.min_area { 1.0 } else { 0.0 };
        Ok((mask, score))
    }
}

/// Leaves of one image painted with distinct gray values; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeMask {
    pub raster: GrayImage,
    /// Gray value to index of the originating candidate.
    pub leaf_ids: BTreeMap<u8, usize>,
}

impl CompositeMask {
    pub fn empty(width: u32, height: u32) -> Self {
        CompositeMask {
            raster: GrayImage::new(width, height),
            leaf_ids: BTreeMap::new(),
        }
    }

    /// Rebuild from a stored raster; candidate indices are unknown and set
    /// to the rank of the gray value.
    pub fn from_raster(raster: GrayImage) -> Self {
        let mut present = [false; 256];
        for p in raster.pixels() {
            present[p.0[0] as usize] = true;
        }
        let leaf_ids = (1..=255u8)
            .filter(|&v| present[v as usize])
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        CompositeMask { raster, leaf_ids }
    }

    pub fn leaf_mask(&self, leaf_id: u8) -> Result<GrayImage> {
        if leaf_id == 0 || !self.leaf_ids.contains_key(&leaf_id) {
            return Err(Error::NotFound(format!("leaf id {leaf_id}")));
        }
        let mut m = GrayImage::new(self.raster.width(), self.raster.height());
        for (x, y, p) in self.raster.enumerate_pixels() {
            if p.0[0] == leaf_id {
                m.put_pixel(x, y, Luma([ON]));
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorFailure {
    pub candidate: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub composite: CompositeMask,
    /// Predictor errors, one per failed candidate.
    pub failures: Vec<PredictorFailure>,
}

/// Seed for an image's gray-value shuffle.
pub fn image_seed(seed: u64, filename: &str) -> u64 {
    seed.wrapping_add(raster::fnv1a(filename.as_bytes()))
}

/// Predict one mask per candidate and paint the survivors.
///
/// Masks below [`MIN_SCORE`] or missing their prompt pixel are dropped.
/// Contested pixels go to the higher score, then to the lower candidate
/// index. Gray values are drawn without replacement from a shuffle of
/// `1..=255` seeded by `seed`.
pub fn segment_image(
    image: &RgbImage,
    candidates: &[LeafCandidate],
    predictor: &dyn MaskPredictor,
    seed: u64,
) -> Result<Segmentation> {
    let (w, h) = image.dimensions();
    let mut accepted: Vec<(usize, f64, GrayImage)> = Vec::new();
    let mut failures = Vec::new();
    for (i, cand) in candidates.iter().enumerate() {
        match predictor.predict(image, cand.midpoint) {
            Ok((mask, score)) => {
                if mask.dimensions() != (w, h) {
                    failures.push(PredictorFailure {
                        candidate: i,
                        message: format!("mask is {:?}, image is {:?}", mask.dimensions(), (w, h)),
                    });
                    continue;
                }
                let (px, py) = (cand.midpoint.0.floor(), cand.midpoint.1.floor());
                let contains = px >= 0.0
                    && py >= 0.0
                    && px < f64::from(w)
                    && py < f64::from(h)
                    && mask.get_pixel(px as u32, py as u32).0[0] > 0;
                if score >= MIN_SCORE && contains {
                    accepted.push((i, score, mask));
                }
            }
            Err(e) => {
                log::warn!("mask prediction failed for candidate {i}: {e}");
                failures.push(PredictorFailure {
                    candidate: i,
                    message: e.to_string(),
                });
            }
        }
    }
    accepted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    // owner[p] = 1 + position in `accepted`
    let mut owner = vec![0u32; (w * h) as usize];
    let mut painted = vec![0usize; accepted.len()];
    for (k, (_, _, mask)) in accepted.iter().enumerate() {
        for (i, &v) in mask.as_raw().iter().enumerate() {
            if v > 0 && owner[i] == 0 {
                owner[i] = k as u32 + 1;
                painted[k] += 1;
            }
        }
    }
    let mut survivors: Vec<usize> = (0..accepted.len()).filter(|&k| painted[k] > 0).collect();
    if survivors.len() > 255 {
        return Err(Error::TooManyLeaves(survivors.len()));
    }
    survivors.sort_by_key(|&k| accepted[k].0);
    let mut values: Vec<u8> = (1..=255).collect();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut gray_of = vec![0u8; accepted.len() + 1];
    let mut leaf_ids = BTreeMap::new();
    for (&k, &v) in survivors.iter().zip(&values) {
        gray_of[k + 1] = v;
        leaf_ids.insert(v, accepted[k].0);
    }
    let raster = GrayImage::from_raw(w, h, owner.iter().map(|&o| gray_of[o as usize]).collect())
        .expect("dimensions match");
    Ok(Segmentation {
        composite: CompositeMask { raster, leaf_ids },
        failures,
    })
}

/// One leaf rotated upright, tightly cropped, background blacked out.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolatedLeaf {
    pub crop: RgbImage,
    pub mask_crop: GrayImage,
    pub filename: String,
    pub leaf_id: u8,
    /// Counterclockwise rotation applied, degrees.
    pub angle: f64,
}

/// Rotate a binary mask, keeping pixels with bilinear coverage of at least
/// one half. The result never has more pixels than the input.
pub fn rotate_mask(mask: &GrayImage, rot: &Rotation) -> GrayImage {
    let original = raster::count_on(mask);
    let coverage = raster::rotate_coverage(mask, rot);
    let mut kept: Vec<usize> = (0..coverage.len()).filter(|&i| coverage[i] >= 0.5).collect();
    if kept.len() > original {
        // Drop the least covered pixels; ties resolve by raster order.
        kept.sort_by(|&a, &b| coverage[b].total_cmp(&coverage[a]).then(a.cmp(&b)));
        kept.truncate(original);
    }
    let mut out = GrayImage::new(rot.width, rot.height);
    let raw = &mut *out;
    for i in kept {
        raw[i] = ON;
    }
    out
}

/// Extract leaf `leaf_id`, rotate so the long axis of its minimum-area
/// rectangle is horizontal, crop to the rotated mask and black out the rest.
pub fn isolate_leaf(
    image: &RgbImage,
    composite: &CompositeMask,
    leaf_id: u8,
    filename: &str,
) -> Result<IsolatedLeaf> {
    let mask = composite.leaf_mask(leaf_id)?;
    let pixels: Vec<(u32, u32)> = mask
        .enumerate_pixels()
        .filter(|(_, _, p)| p.0[0] > 0)
        .map(|(x, y, _)| (x, y))
        .collect();
    if pixels.is_empty() {
        return Err(Error::NotFound(format!("leaf id {leaf_id} has no pixels")));
    }
    let rect = geometry::min_area_rect(&geometry::pixel_corners(&pixels));
    let angle = rect.long_axis_deg;
    let (rot_img, rot_mask) = if angle == 0.0 {
        (image.clone(), mask)
    } else {
        let rot = Rotation::new(image.width(), image.height(), angle);
        (raster::rotate_rgb_with(image, &rot), rotate_mask(&mask, &rot))
    };
    let (bx, by, bw, bh) = raster::mask_bbox(&rot_mask)
        .ok_or_else(|| Error::NotFound(format!("leaf id {leaf_id} vanished on rotation")))?;
    let mask_crop = image::imageops::crop_imm(&rot_mask, bx, by, bw, bh).to_image();
    let crop = RgbImage::from_fn(bw, bh, |x, y| {
        if mask_crop.get_pixel(x, y).0[0] > 0 {
            *rot_img.get_pixel(bx + x, by + y)
        } else {
            Rgb([0, 0, 0])
        }
    });
    Ok(IsolatedLeaf {
        crop,
        mask_crop,
        filename: filename.to_owned(),
        leaf_id,
        angle,
    })
}

/// Crops of every leaf in a composite, in ascending gray-value order.
pub fn isolate_all(image: &RgbImage, composite: &CompositeMask, filename: &str) -> Result<Vec<IsolatedLeaf>> {
    composite
        .leaf_ids
        .keys()
        .map(|&id| isolate_leaf(image, composite, id, filename))
        .collect()
}
