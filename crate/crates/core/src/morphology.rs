//! Leaf features, suitability and morphology classification, per-image
//! aggregation.
//!
//! The feature vector is this crate's own choice: hue and green statistics
//! separate colors, aspect ratio, solidity and the width profile separate
//! shapes, and the brown-pixel share separates splotch levels.

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::labels::{Category, LeafColor, LeafShape, MorphologyLabel, Splotches};
use crate::ml::{self, Dataset, EnsembleModel, HyperParams, Kind, MultiOutputModel};
use crate::raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafFeatures {
    /// Mask pixels over crop pixels.
    pub area_frac: f64,
    /// Long over short side of the minimum-area rectangle.
    pub aspect_ratio: f64,
    /// Mask pixels over minimum-area-rectangle area.
    pub extent: f64,
    /// Mask pixels over convex-hull area.
    pub solidity: f64,
    /// `perimeter^2 / (4 pi area)`.
    pub compactness: f64,
    /// Circular mean hue, degrees in `[0, 360)`.
    pub hue_mean: f64,
    /// Circular standard deviation of hue, degrees.
    pub hue_std: f64,
    pub sat_mean: f64,
    pub val_mean: f64,
    /// Mean green channel, `0..=255`.
    pub green_mean: f64,
    /// Share of pixels with hue in `[40, 70]`.
    pub yellow_ratio: f64,
    /// Share of pixels with hue in `[10, 40]` and value below 0.6.
    pub brown_ratio: f64,
    /// Skewness of the width profile along the long crop side, with the
    /// profile oriented so its centroid lies in the first half.
    pub width_profile_skew: f64,
    /// Relative position of the widest point on the oriented profile.
    pub width_profile_peak_pos: f64,
}

impl LeafFeatures {
    pub const NAMES: [&'static str; 14] = [
        "area_frac",
        "aspect_ratio",
        "extent",
        "solidity",
        "compactness",
        "hue_mean",
        "hue_std",
        "sat_mean",
        "val_mean",
        "green_mean",
        "yellow_ratio",
        "brown_ratio",
        "width_profile_skew",
        "width_profile_peak_pos",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.area_frac,
            self.aspect_ratio,
            self.extent,
            self.solidity,
            self.compactness,
            self.hue_mean,
            self.hue_std,
            self.sat_mean,
            self.val_mean,
            self.green_mean,
            self.yellow_ratio,
            self.brown_ratio,
            self.width_profile_skew,
            self.width_profile_peak_pos,
        ]
    }

    pub fn feature_names() -> Vec<String> {
        Self::NAMES.iter().map(|s| s.to_string()).collect()
    }
}

/// Compute the features of a masked crop. Only pixels with a set mask
/// contribute.
pub fn extract_features(crop: &RgbImage, mask: &GrayImage) -> Result<LeafFeatures> {
    if crop.dimensions() != mask.dimensions() {
        return Err(Error::InvalidInput("crop and mask sizes differ".into()));
    }
    let pixels: Vec<(u32, u32)> = mask
        .enumerate_pixels()
        .filter(|(_, _, p)| p.0[0] > 0)
        .map(|(x, y, _)| (x, y))
        .collect();
    if pixels.is_empty() {
        return Err(Error::InvalidInput("empty leaf mask".into()));
    }
    let n = pixels.len() as f64;
    let (cw, ch) = crop.dimensions();

    let corners = geometry::pixel_corners(&pixels);
    let rect = geometry::min_area_rect(&corners);
    let hull_area = geometry::polygon_area(&geometry::convex_hull(&corners));
    let perimeter = outer_perimeter(mask);

    let mut sum_cos = 0.0;
    let mut sum_sin = 0.0;
    let (mut sat, mut val, mut green, mut yellow, mut brown) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for &(x, y) in &pixels {
        let px = crop.get_pixel(x, y).0;
        let (h, s, v) = raster::rgb_to_hsv(px);
        let (sn, cs) = h.to_radians().sin_cos();
        sum_cos += cs;
        sum_sin += sn;
        sat += s;
        val += v;
        green += f64::from(px[1]);
        if (40.0..=70.0).contains(&h) {
            yellow += 1;
        }
        if (10.0..=40.0).contains(&h) && v < 0.6 {
            brown += 1;
        }
    }
    let resultant = (sum_cos.hypot(sum_sin) / n).min(1.0);
    let hue_mean = if resultant < 1e-12 {
        0.0
    } else {
        sum_sin.atan2(sum_cos).to_degrees().rem_euclid(360.0)
    };
    let hue_std = if resultant < 1e-300 {
        180.0
    } else {
        (-2.0 * resultant.ln()).max(0.0).sqrt().to_degrees()
    };

    let (skew, peak) = width_profile(mask, cw >= ch);

    Ok(LeafFeatures {
        area_frac: n / f64::from(cw * ch),
        aspect_ratio: (rect.long_side / rect.short_side).max(1.0),
        extent: (n / (rect.long_side * rect.short_side)).min(1.0),
        solidity: (n / hull_area).min(1.0),
        compactness: perimeter * perimeter / (4.0 * std::f64::consts::PI * n),
        hue_mean,
        hue_std,
        sat_mean: sat / n,
        val_mean: val / n,
        green_mean: green / n,
        yellow_ratio: yellow as f64 / n,
        brown_ratio: brown as f64 / n,
        width_profile_skew: skew,
        width_profile_peak_pos: peak,
    })
}

/// Perimeter of the largest 8-connected component's outer boundary.
fn outer_perimeter(mask: &GrayImage) -> f64 {
    let (labels, comps) = geometry::components(mask);
    let Some((k, comp)) = comps.iter().enumerate().max_by_key(|(k, c)| (c.pixels.len(), usize::MAX - k)) else {
        return 0.0;
    };
    let label = k as u32 + 1;
    let (w, h) = (i64::from(mask.width()), i64::from(mask.height()));
    let start = *comp.pixels.iter().min_by_key(|&&(x, y)| (y, x)).expect("non-empty");
    let contour = geometry::trace_boundary(
        |x, y| x >= 0 && y >= 0 && x < w && y < h && labels[(y * w + x) as usize] == label,
        start,
    );
    geometry::chain_perimeter(&contour)
}

/// `(skewness, peak position)` of the mask's width profile. With
/// `horizontal` the profile runs over columns, otherwise over rows.
fn width_profile(mask: &GrayImage, horizontal: bool) -> (f64, f64) {
    let (w, h) = mask.dimensions();
    let len = if horizontal { w } else { h } as usize;
    let mut prof = vec![0.0f64; len];
    for (x, y, p) in mask.enumerate_pixels() {
        if p.0[0] > 0 {
            prof[if horizontal { x } else { y } as usize] += 1.0;
        }
    }
    let total: f64 = prof.iter().sum();
    let pos = |i: usize| (i as f64 + 0.5) / len as f64;
    let mean: f64 = prof.iter().enumerate().map(|(i, &v)| v * pos(i)).sum::<f64>() / total;
    if mean > 0.5 {
        prof.reverse();
    }
    let mean = if mean > 0.5 { 1.0 - mean } else { mean };
    let (mut m2, mut m3) = (0.0, 0.0);
    for (i, &v) in prof.iter().enumerate() {
        let d = pos(i) - mean;
        m2 += v * d * d;
        m3 += v * d * d * d;
    }
    m2 /= total;
    m3 /= total;
    let skew = if m2 <= 1e-18 { 0.0 } else { m3 / m2.powf(1.5) };
    let max = prof.iter().copied().fold(f64::MIN, f64::max);
    let plateau: Vec<usize> = (0..len).filter(|&i| prof[i] == max).collect();
    let mid = plateau.iter().sum::<usize>() as f64 / plateau.len() as f64;
    (skew, (mid + 0.5) / len as f64)
}

pub const GOOD: &str = "good";
pub const BAD: &str = "bad";

/// Train the suitability model (bagged by default).
pub fn train_suitability(
    samples: &[(LeafFeatures, bool)],
    params: Option<HyperParams>,
    seed: u64,
) -> Result<EnsembleModel> {
    let features = samples.iter().map(|(f, _)| f.to_vec()).collect();
    let labels: Vec<Vec<String>> = samples
        .iter()
        .map(|(_, g)| vec![if *g { GOOD } else { BAD }.to_owned()])
        .collect();
    let data = Dataset::from_labels(features, &labels, LeafFeatures::feature_names(), vec!["suitability".into()])?;
    let params = params.unwrap_or_else(|| HyperParams::default_for(Kind::Bagged));
    ml::fit(&data, 0, &params, seed)
}

pub fn classify_suitability(features: &LeafFeatures, model: &EnsembleModel) -> Result<bool> {
    if model.encoder.classes() != [BAD, GOOD] {
        return Err(Error::Model("not a suitability model (classes must be bad/good)".into()));
    }
    Ok(model.predict_label(&features.to_vec())? == GOOD)
}

/// Morphology training set with targets color, shape, splotches.
pub fn morphology_dataset(samples: &[(LeafFeatures, MorphologyLabel)]) -> Result<Dataset> {
    let features = samples.iter().map(|(f, _)| f.to_vec()).collect();
    let labels: Vec<Vec<String>> = samples
        .iter()
        .map(|(_, l)| l.as_strs().iter().map(|s| s.to_string()).collect())
        .collect();
    Dataset::from_labels(
        features,
        &labels,
        LeafFeatures::feature_names(),
        MorphologyLabel::TARGETS.iter().map(|s| s.to_string()).collect(),
    )
}

/// Train one ensemble per morphology target (boosted by default).
///
/// A target with a single observed class cannot be fitted; its submodel is
/// then a constant predictor of that class.
pub fn train_morphology(
    samples: &[(LeafFeatures, MorphologyLabel)],
    params: Option<HyperParams>,
    seed: u64,
) -> Result<MultiOutputModel> {
    let data = morphology_dataset(samples)?;
    let params = params.unwrap_or_else(|| HyperParams::default_for(Kind::Boosted));
    let model = MultiOutputModel::fit(&data, &params, seed);
    match model {
        Err(Error::DegenerateTarget(_)) => fit_with_constants(&data, &params, seed),
        other => other,
    }
}

fn fit_with_constants(data: &Dataset, params: &HyperParams, seed: u64) -> Result<MultiOutputModel> {
    let mut targets = Vec::new();
    for t in 0..data.target_names.len() {
        let model = match ml::fit(data, t, params, seed.wrapping_add(t as u64)) {
            Ok(m) => m,
            Err(Error::DegenerateTarget(_)) => constant_model(data, t, seed),
            Err(e) => return Err(e),
        };
        targets.push(ml::NamedModel {
            name: data.target_names[t].clone(),
            model,
        });
    }
    Ok(MultiOutputModel {
        format: ml::MODEL_FORMAT.into(),
        kind: "multi_output".into(),
        targets,
    })
}

fn constant_model(data: &Dataset, t: usize, seed: u64) -> EnsembleModel {
    let encoder = data.encoders[t].clone();
    let class = data.targets.first().map_or(0, |r| r[t]);
    let mut value = vec![0.0; encoder.len()];
    value[class] = 1.0;
    EnsembleModel {
        format: ml::MODEL_FORMAT.into(),
        kind: Kind::Bagged,
        hyperparams: HyperParams::default_for(Kind::Bagged),
        n_classes: encoder.len(),
        encoder,
        n_features: data.n_features(),
        feature_names: data.feature_names.clone(),
        seed,
        base_score: vec![0.0; value.len()],
        trees: vec![ml::Tree {
            nodes: vec![ml::Node::Leaf { value }],
        }],
    }
}

pub fn classify_morphology(features: &LeafFeatures, model: &MultiOutputModel) -> Result<MorphologyLabel> {
    let names: Vec<&str> = model.targets.iter().map(|t| t.name.as_str()).collect();
    if names != MorphologyLabel::TARGETS {
        return Err(Error::Model(format!("morphology model targets are {names:?}")));
    }
    let labels = model.predict_labels(&features.to_vec())?;
    MorphologyLabel::from_strs(&labels[0], &labels[1], &labels[2])
}

/// Most frequent value; ties go to the earliest declared class.
pub fn mode<C: Category>(values: impl IntoIterator<Item = C>) -> Option<C> {
    let mut counts = vec![0usize; C::ALL.len()];
    let mut any = false;
    for v in values {
        counts[v.index()] += 1;
        any = true;
    }
    any.then(|| C::ALL[(1..counts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b })])
}

/// Per-field mode over an image's eligible leaves; `None` when there are
/// none.
pub fn aggregate_image(labels: &[MorphologyLabel]) -> Option<MorphologyLabel> {
    Some(MorphologyLabel {
        color: mode::<LeafColor>(labels.iter().map(|l| l.color))?,
        shape: mode::<LeafShape>(labels.iter().map(|l| l.shape))?,
        splotches: mode::<Splotches>(labels.iter().map(|l| l.splotches))?,
    })
}
