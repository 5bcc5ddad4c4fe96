//! Seeded synthetic field photos and leaf crops with known ground truth.
//!
//! Leaf outlines are parameterized along the midrib `t ∈ [0, 1]`:
//! ovate and lanceolate use the half-width profile `sin(π t^a)`, elliptical
//! is a true ellipse, oblong a superellipse of exponent 4.

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::label_parser::{LabelRecord, Treatment};
use crate::labels::{Category, LeafColor, LeafShape, MorphologyLabel, Splotches};
use crate::raster::{hsv_to_rgb, ON};

pub const SCENE_WIDTH: u32 = 480;
pub const SCENE_HEIGHT: u32 = 360;
pub const SOIL: [u8; 3] = [110, 92, 75];

/// `(hue°, saturation, value)` of each leaf color.
pub fn color_hsv(c: LeafColor) -> (f64, f64, f64) {
    match c {
        LeafColor::LightGreen => (95.0, 0.45, 0.85),
        LeafColor::DarkGreen => (125.0, 0.70, 0.55),
        LeafColor::YellowGreen => (75.0, 0.65, 0.80),
        LeafColor::Yellow => (52.0, 0.70, 0.90),
    }
}

pub const BROWN_HSV: (f64, f64, f64) = (25.0, 0.60, 0.35);

/// Fraction of leaf area covered by splotches.
pub fn splotch_fraction(s: Splotches) -> f64 {
    match s {
        Splotches::None => 0.0,
        Splotches::Low => 0.05,
        Splotches::Medium => 0.13,
        Splotches::High => 0.25,
    }
}

/// Length over width.
pub fn shape_aspect(s: LeafShape) -> f64 {
    match s {
        LeafShape::Ovate => 1.7,
        LeafShape::Lanceolate => 3.6,
        LeafShape::Elliptical => 2.0,
        LeafShape::Oblong => 2.4,
    }
}

/// Whether the leaf-local point lies inside the outline. `u` runs along the
/// midrib from -1 (base) to 1 (tip), `v` across it from -1 to 1.
pub fn shape_contains(s: LeafShape, u: f64, v: f64) -> bool {
    if !(-1.0..=1.0).contains(&u) {
        return false;
    }
    let t = (u + 1.0) / 2.0;
    let half = match s {
        // Peak widths at t = 0.35 and t = 0.30.
        LeafShape::Ovate => (std::f64::consts::PI * t.powf(0.66)).sin(),
        LeafShape::Lanceolate => (std::f64::consts::PI * t.powf(0.58)).sin(),
        LeafShape::Elliptical => (1.0 - u * u).max(0.0).sqrt(),
        LeafShape::Oblong => (1.0 - u.powi(4)).max(0.0).powf(0.25),
    };
    v.abs() <= half
}

/// A leaf placed in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSpec {
    pub label: MorphologyLabel,
    pub center: (f64, f64),
    pub length: f64,
    pub width: f64,
    /// Midrib direction, degrees counterclockwise from +x.
    pub angle_deg: f64,
    /// Cut the outline at this midrib position (`u` above is removed).
    pub truncate_at: Option<f64>,
}

impl LeafSpec {
    /// Bounding radius.
    pub fn radius(&self) -> f64 {
        self.length.max(self.width) / 2.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        // y grows downward; counterclockwise on screen flips the sine.
        let along = dx * c - dy * s;
        let across = dx * s + dy * c;
        let u = along / (self.length / 2.0);
        if self.truncate_at.is_some_and(|cut| u > cut) {
            return false;
        }
        shape_contains(self.label.shape, u, across / (self.width / 2.0))
    }

    /// Pixel mask at pixel centers on a `w × h` canvas.
    pub fn mask(&self, w: u32, h: u32) -> GrayImage {
        let r = self.radius().ceil() + 1.0;
        let mut m = GrayImage::new(w, h);
        let x0 = (self.center.0 - r).floor().max(0.0) as u32;
        let y0 = (self.center.1 - r).floor().max(0.0) as u32;
        let x1 = ((self.center.0 + r).ceil().max(0.0) as u32).min(w);
        let y1 = ((self.center.1 + r).ceil().max(0.0) as u32).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                if self.contains(f64::from(x) + 0.5, f64::from(y) + 0.5) {
                    m.put_pixel(x, y, Luma([ON]));
                }
            }
        }
        m
    }
}

fn jittered(rng: &mut ChaCha8Rng, (h, s, v): (f64, f64, f64)) -> Rgb<u8> {
    let h = h + rng.gen_range(-2.0..2.0);
    let v = (v * (1.0 + rng.gen_range(-0.04..0.04))).clamp(0.0, 1.0);
    Rgb(hsv_to_rgb(h, s, v))
}

/// Paint a leaf into `img`, splotches included; returns its mask.
pub fn paint_leaf(img: &mut RgbImage, spec: &LeafSpec, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = img.dimensions();
    let mask = spec.mask(w, h);
    let pixels: Vec<(u32, u32)> = mask
        .enumerate_pixels()
        .filter(|(_, _, p)| p.0[0] > 0)
        .map(|(x, y, _)| (x, y))
        .collect();
    let base = color_hsv(spec.label.color);
    for &(x, y) in &pixels {
        img.put_pixel(x, y, jittered(rng, base));
    }
    let target = (splotch_fraction(spec.label.splotches) * pixels.len() as f64).round() as usize;
    let mut brown = GrayImage::new(w, h);
    let mut painted = 0usize;
    let mut attempts = 0;
    while painted < target && attempts < 10_000 {
        attempts += 1;
        let (cx, cy) = pixels[rng.gen_range(0..pixels.len())];
        let r = spec.width * rng.gen_range(0.06..0.12);
        let ri = r.ceil() as i64;
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if painted >= target {
                    break;
                }
                let (x, y) = (i64::from(cx) + dx, i64::from(cy) + dy);
                if x < 0 || y < 0 || x >= i64::from(w) || y >= i64::from(h) {
                    continue;
                }
                let (x, y) = (x as u32, y as u32);
                if ((dx * dx + dy * dy) as f64) <= r * r
                    && mask.get_pixel(x, y).0[0] > 0
                    && brown.get_pixel(x, y).0[0] == 0
                {
                    brown.put_pixel(x, y, Luma([ON]));
                    img.put_pixel(x, y, jittered(rng, BROWN_HSV));
                    painted += 1;
                }
            }
        }
    }
    mask
}

pub fn random_label(rng: &mut ChaCha8Rng) -> MorphologyLabel {
    MorphologyLabel::new(
        LeafColor::ALL[rng.gen_range(0..4)],
        LeafShape::ALL[rng.gen_range(0..4)],
        Splotches::ALL[rng.gen_range(0..4)],
    )
}

fn soil(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| {
        let d: i16 = rng.gen_range(-6..=6);
        Rgb(SOIL.map(|c| (i16::from(c) + d).clamp(0, 255) as u8))
    })
}

/// A white paper tag with dark marks standing in for text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelTag {
    pub bbox: (u32, u32, u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distractor {
    pub bbox: (u32, u32, u32, u32),
    pub kind: DistractorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistractorKind {
    Twig,
    WhiteTag,
}

#[derive(Debug, Clone)]
pub struct PlantedLeaf {
    pub spec: LeafSpec,
    pub mask: GrayImage,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RgbImage,
    pub leaves: Vec<PlantedLeaf>,
    pub distractors: Vec<Distractor>,
}

fn disjoint(placed: &[(f64, f64, f64)], c: (f64, f64), r: f64, gap: f64) -> bool {
    placed
        .iter()
        .all(|&(x, y, pr)| ((x - c.0).powi(2) + (y - c.1).powi(2)).sqrt() >= pr + r + gap)
}

/// A field-photo stand-in: 3 to 6 leaves on soil with brown twigs and a
/// white tag. Leaves keep at least 30 px between bounding circles.
pub fn scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (SCENE_WIDTH, SCENE_HEIGHT);
    let mut image = soil(&mut rng, w, h);
    let side = f64::from(w.min(h));
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let mut distractors = Vec::new();

    // Tag in a corner band, twigs anywhere.
    let (tw, th) = (rng.gen_range(70..100u32), rng.gen_range(40..56u32));
    let (tx, ty) = (rng.gen_range(4..w - tw - 4), rng.gen_range(4..24u32));
    for y in ty..ty + th {
        for x in tx..tx + tw {
            let ink = (y - ty) % 12 >= 4 && (y - ty) % 12 < 7 && (x - tx) % 9 < 6 && x > tx + 5 && x + 5 < tx + tw;
            image.put_pixel(x, y, if ink { Rgb([40, 40, 40]) } else { Rgb([245, 245, 240]) });
        }
    }
    placed.push((f64::from(tx + tw / 2), f64::from(ty + th / 2), f64::from(tw.max(th)) / 1.6));
    distractors.push(Distractor {
        bbox: (tx, ty, tw, th),
        kind: DistractorKind::WhiteTag,
    });

    let n = rng.gen_range(3..=6);
    let mut leaves = Vec::new();
    let mut tries = 0;
    while leaves.len() < n && tries < 2000 {
        tries += 1;
        let label = random_label(&mut rng);
        let aspect = shape_aspect(label.shape) * rng.gen_range(0.92..1.08);
        // Narrow leaves grow longer so any orientation clears the size filter.
        let width = (side * rng.gen_range(0.20..0.30) / aspect).max(side * 0.07);
        let length = width * aspect;
        let spec = LeafSpec {
            label,
            center: (0.0, 0.0),
            length,
            width,
            angle_deg: rng.gen_range(0.0..180.0),
            truncate_at: None,
        };
        let r = spec.radius();
        let c = (rng.gen_range(r + 2.0..f64::from(w) - r - 2.0), rng.gen_range(r + 2.0..f64::from(h) - r - 2.0));
        if !disjoint(&placed, c, r, 30.0) {
            continue;
        }
        let spec = LeafSpec { center: c, ..spec };
        let mask = paint_leaf(&mut image, &spec, &mut rng);
        placed.push((c.0, c.1, r));
        leaves.push(PlantedLeaf { spec, mask });
    }

    for _ in 0..rng.gen_range(1..=3) {
        let len = rng.gen_range(40.0..90.0);
        let c = (rng.gen_range(50.0..f64::from(w) - 50.0), rng.gen_range(50.0..f64::from(h) - 50.0));
        if !disjoint(&placed, c, len / 2.0, 12.0) {
            continue;
        }
        let angle: f64 = rng.gen_range(0.0..180.0);
        let (s, co) = angle.to_radians().sin_cos();
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for k in 0..(len as i32) {
            let t = f64::from(k) - len / 2.0;
            for d in -2..=2 {
                let x = (c.0 + t * co - f64::from(d) * s).round() as u32;
                let y = (c.1 - t * s - f64::from(d) * co).round() as u32;
                image.put_pixel(x, y, jittered(&mut rng, (28.0, 0.55, 0.42)));
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            }
        }
        placed.push((c.0, c.1, len / 2.0));
        distractors.push(Distractor {
            bbox: (x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            kind: DistractorKind::Twig,
        });
    }
    Scene {
        image,
        leaves,
        distractors,
    }
}

/// Uniform ellipses on black, each one color, separated by at least 20 px.
pub fn ellipse_scene(seed: u64, n: usize) -> (RgbImage, Vec<GrayImage>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (SCENE_WIDTH, SCENE_HEIGHT);
    let mut image = RgbImage::new(w, h);
    let mut placed = Vec::new();
    let mut masks = Vec::new();
    let mut tries = 0;
    while masks.len() < n && tries < 5000 {
        tries += 1;
        let a = rng.gen_range(25.0..60.0);
        let b = a * rng.gen_range(0.4..0.9);
        let c = (rng.gen_range(a + 2.0..f64::from(w) - a - 2.0), rng.gen_range(a + 2.0..f64::from(h) - a - 2.0));
        if !disjoint(&placed, c, a, 20.0) {
            continue;
        }
        placed.push((c.0, c.1, a));
        let spec = LeafSpec {
            label: MorphologyLabel::new(LeafColor::LightGreen, LeafShape::Elliptical, Splotches::None),
            center: c,
            length: 2.0 * a,
            width: 2.0 * b,
            angle_deg: rng.gen_range(0.0..180.0),
            truncate_at: None,
        };
        let mask = spec.mask(w, h);
        let color = Rgb(hsv_to_rgb(rng.gen_range(70.0..140.0), rng.gen_range(0.4..0.8), rng.gen_range(0.5..0.9)));
        for (x, y, p) in mask.enumerate_pixels() {
            if p.0[0] > 0 {
                image.put_pixel(x, y, color);
            }
        }
        masks.push(mask);
    }
    (image, masks)
}

/// An upright leaf crop: midrib horizontal, black background, tight bbox.
pub fn render_leaf(label: MorphologyLabel, rng: &mut ChaCha8Rng) -> (RgbImage, GrayImage) {
    let length = rng.gen_range(70.0..110.0);
    let width = length / (shape_aspect(label.shape) * rng.gen_range(0.94..1.06));
    let spec = LeafSpec {
        label,
        center: (length / 2.0 + 2.0, width / 2.0 + 2.0),
        length,
        width,
        angle_deg: if rng.gen_bool(0.5) { 0.0 } else { 180.0 },
        truncate_at: None,
    };
    render_spec(&spec, rng)
}

fn render_spec(spec: &LeafSpec, rng: &mut ChaCha8Rng) -> (RgbImage, GrayImage) {
    let (w, h) = ((spec.length + 4.0).ceil() as u32, (spec.width + 4.0).ceil() as u32);
    let mut img = RgbImage::new(w, h);
    let mask = paint_leaf(&mut img, spec, rng);
    let (bx, by, bw, bh) = crate::raster::mask_bbox(&mask).expect("leaf has pixels");
    (
        image::imageops::crop_imm(&img, bx, by, bw, bh).to_image(),
        image::imageops::crop_imm(&mask, bx, by, bw, bh).to_image(),
    )
}

/// A leaf unsuitable for classification: a torn-off fragment or a thin
/// stalk-like sliver.
pub fn render_bad_leaf(rng: &mut ChaCha8Rng) -> (RgbImage, GrayImage) {
    let label = random_label(rng);
    if rng.gen_bool(0.5) {
        let length = rng.gen_range(70.0..110.0);
        let width = length / shape_aspect(label.shape);
        let spec = LeafSpec {
            label,
            center: (length / 2.0 + 2.0, width / 2.0 + 2.0),
            length,
            width,
            angle_deg: 0.0,
            truncate_at: Some(rng.gen_range(-0.45..-0.2)),
        };
        render_spec(&spec, rng)
    } else {
        let length = rng.gen_range(60.0..110.0);
        let spec = LeafSpec {
            label: MorphologyLabel { shape: LeafShape::Oblong, ..label },
            center: (length / 2.0 + 2.0, 5.0),
            length,
            width: rng.gen_range(3.0..6.0),
            angle_deg: 0.0,
            truncate_at: None,
        };
        render_spec(&spec, rng)
    }
}

/// A plausible label record for image `index` and the OCR text a reader
/// would see on its tag.
pub fn label_for(index: usize, rng: &mut ChaCha8Rng) -> (LabelRecord, String) {
    const GENOTYPES: [&str; 5] = ["BESC-34", "BESC-417", "BESC-468", "BESC-28", "LILD-26-5"];
    let rec = LabelRecord {
        filename: String::new(),
        treatment: Some(if rng.gen_bool(0.5) { Treatment::C } else { Treatment::D }),
        block: Some(rng.gen_range(1..=3)),
        row: Some(rng.gen_range(1..=30)),
        position: Some(rng.gen_range(1..=60)),
        genotype: Some(GENOTYPES[index % GENOTYPES.len()].to_owned()),
    };
    let text = format!(
        "{} B{} R{} P{} {}",
        rec.treatment.expect("set").as_str(),
        rec.block.expect("set"),
        rec.row.expect("set"),
        rec.position.expect("set"),
        rec.genotype.as_deref().expect("set")
    );
    (rec, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::count_on;

    #[test]
    fn scenes_are_seeded() {
        let a = scene(4);
        let b = scene(4);
        assert_eq!(a.image, b.image);
        assert!((3..=6).contains(&a.leaves.len()));
        assert_ne!(scene(5).image, a.image);
    }

    #[test]
    fn leaves_do_not_overlap() {
        let s = scene(11);
        for (i, a) in s.leaves.iter().enumerate() {
            for b in &s.leaves[i + 1..] {
                assert!(a.mask.pixels().zip(b.mask.pixels()).all(|(p, q)| p.0[0] == 0 || q.0[0] == 0));
            }
        }
    }

    #[test]
    fn splotch_fraction_is_hit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let label = MorphologyLabel::new(LeafColor::LightGreen, LeafShape::Elliptical, Splotches::High);
        let (crop, mask) = render_leaf(label, &mut rng);
        let n = count_on(&mask) as f64;
        let brown = crop
            .pixels()
            .filter(|p| {
                let (h, _, v) = crate::raster::rgb_to_hsv(p.0);
                v > 0.0 && (10.0..40.0).contains(&h)
            })
            .count() as f64;
        assert!((brown / n - 0.25).abs() < 0.01, "{}", brown / n);
    }

    #[test]
    fn ellipse_masks_are_disjoint_and_nonempty() {
        let (_, masks) = ellipse_scene(3, 4);
        assert_eq!(masks.len(), 4);
        assert!(masks.iter().all(|m| count_on(m) > 1000));
    }
}
