//! Approximate leaf locations: HSV filter, Canny edges, dilation, external
//! contours, size and greenness pruning, bounding-box midpoints.

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::raster::{self, ON};

/// Inclusive HSV box. Hue in degrees, saturation and value as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvRange {
    pub h_lo: f64,
    pub h_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Default for HsvRange {
    fn default() -> Self {
        HsvRange {
            h_lo: 35.0,
            h_hi: 160.0,
            s_lo: 0.15,
            s_hi: 1.0,
            v_lo: 0.15,
            v_hi: 1.0,
        }
    }
}

impl HsvRange {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..360.0).contains(&self.h_lo)
            && (0.0..360.0).contains(&self.h_hi)
            && self.h_lo <= self.h_hi
            && (0.0..=1.0).contains(&self.s_lo)
            && (0.0..=1.0).contains(&self.s_hi)
            && self.s_lo <= self.s_hi
            && (0.0..=1.0).contains(&self.v_lo)
            && (0.0..=1.0).contains(&self.v_hi)
            && self.v_lo <= self.v_hi;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("illegal HSV range {self:?}")))
        }
    }

    pub fn contains(&self, hsv: (f64, f64, f64)) -> bool {
        let (h, s, v) = hsv;
        (self.h_lo..=self.h_hi).contains(&h)
            && (self.s_lo..=self.s_hi).contains(&s)
            && (self.v_lo..=self.v_hi).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocatorConfig {
    pub hsv: HsvRange,
    pub sigma: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub kernel: u32,
    pub iterations: u32,
    /// Minimum bounding-box side as a fraction of the matching image side.
    pub min_frac: f64,
    /// Minimum mean green channel inside the filled contour.
    pub green_threshold: f64,
}

impl Default for LocatorConfig {
    fn default() -> Self {
        LocatorConfig {
            hsv: HsvRange::default(),
            sigma: 1.4,
            t_lo: 50.0,
            t_hi: 150.0,
            kernel: 9,
            iterations: 3,
            min_frac: 0.05,
            green_threshold: 100.0,
        }
    }
}

impl LocatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.hsv.validate()?;
        if !(self.t_lo > 0.0 && self.t_lo < self.t_hi) {
            return Err(Error::InvalidInput("edge thresholds need 0 < t_lo < t_hi".into()));
        }
        if self.kernel < 3 || self.kernel.is_multiple_of(2) || self.iterations == 0 {
            return Err(Error::InvalidInput("dilation kernel must be odd and >= 3".into()));
        }
        if !(0.0..=1.0).contains(&self.min_frac) || self.sigma <= 0.0 {
            return Err(Error::InvalidInput("min_frac must lie in [0, 1], sigma > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafCandidate {
    pub contour: Vec<(u32, u32)>,
    /// `(x, y, w, h)`
    pub bbox: (u32, u32, u32, u32),
    pub midpoint: (f64, f64),
    pub mean_green: f64,
}

/// Bounding-box center `(x + w/2, y + h/2)`.
pub fn midpoint(bbox: (u32, u32, u32, u32)) -> (f64, f64) {
    let (x, y, w, h) = bbox;
    (
        f64::from(x) + f64::from(w) / 2.0,
        f64::from(y) + f64::from(h) / 2.0,
    )
}

/// Keep pixels inside `range`, blacken the rest.
pub fn hsv_filter(image: &RgbImage, range: &HsvRange) -> RgbImage {
    let mut out = image.clone();
    for p in out.pixels_mut() {
        if !range.contains(raster::rgb_to_hsv(p.0)) {
            p.0 = [0, 0, 0];
        }
    }
    out
}

/// Canny edges of the luma channel with the default smoothing.
pub fn edge_map(image: &RgbImage, t_lo: f64, t_hi: f64) -> GrayImage {
    canny(&raster::to_gray(image), 1.4, t_lo, t_hi)
}

/// Canny detector: Gaussian smoothing, Sobel gradients (L2 magnitude),
/// four-direction non-maximum suppression and 8-connected hysteresis.
pub fn canny(gray: &GrayImage, sigma: f64, t_lo: f64, t_hi: f64) -> GrayImage {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut out = GrayImage::new(gray.width(), gray.height());
    if w < 3 || h < 3 {
        return out;
    }
    let smooth = raster::gaussian_blur(gray, sigma);
    let at = |x: usize, y: usize| smooth[y * w + x];
    let mut mag = vec![0.0f64; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1);
            mag[y * w + x] = gx.hypot(gy);
            // Quantized gradient direction: 0 horizontal, 1 diagonal "\",
            // 2 vertical, 3 diagonal "/" (y down).
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            dir[y * w + x] = match angle {
                a if !(22.5..157.5).contains(&a) => 0,
                a if a < 67.5 => 1,
                a if a < 112.5 => 2,
                _ => 3,
            };
        }
    }
    // Strict on one side and non-strict on the other keeps exactly one pixel
    // of a two-pixel plateau.
    let mut strong = Vec::new();
    let mut weak = vec![false; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m < t_lo {
                continue;
            }
            let (a, b) = match dir[i] {
                0 => (mag[i - 1], mag[i + 1]),
                1 => (mag[i - w - 1], mag[i + w + 1]),
                2 => (mag[i - w], mag[i + w]),
                _ => (mag[i - w + 1], mag[i + w - 1]),
            };
            if m > a && m >= b {
                if m >= t_hi {
                    strong.push(i);
                } else {
                    weak[i] = true;
                }
            }
        }
    }
    let raw = &mut *out;
    let mut stack = strong;
    for &i in &stack {
        raw[i] = ON;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if weak[j] && raw[j] == 0 {
                    raw[j] = ON;
                    stack.push(j);
                }
            }
        }
    }
    out
}

/// Binary dilation with a `kernel x kernel` square, repeated `iterations`
/// times. Pixels outside the raster never contribute.
pub fn dilate(binary: &GrayImage, kernel: u32, iterations: u32) -> GrayImage {
    assert!(kernel >= 3 && kernel % 2 == 1, "kernel must be odd and >= 3");
    let (w, h) = (binary.width() as usize, binary.height() as usize);
    let r = (kernel / 2) as usize;
    let mut cur: Vec<bool> = binary.as_raw().iter().map(|&v| v > 0).collect();
    let mut tmp = vec![false; w * h];
    for _ in 0..iterations {
        // Separable: horizontal pass then vertical pass.
        for y in 0..h {
            for x in 0..w {
                let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
                tmp[y * w + x] = cur[y * w + lo..=y * w + hi].iter().any(|&b| b);
            }
        }
        for y in 0..h {
            for x in 0..w {
                let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
                cur[y * w + x] = (lo..=hi).any(|yy| tmp[yy * w + x]);
            }
        }
    }
    GrayImage::from_raw(
        w as u32,
        h as u32,
        cur.into_iter().map(|b| if b { ON } else { 0 }).collect(),
    )
    .expect("dimensions preserved")
}

/// A traced outer boundary with its filled interior.
#[derive(Debug, Clone)]
pub struct ExternalContour {
    pub contour: Vec<(u32, u32)>,
    pub bbox: (u32, u32, u32, u32),
    /// Row-major flags over `bbox`, set for the region and its holes.
    pub filled: Vec<bool>,
}

impl ExternalContour {
    pub fn filled_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let (bx, by, bw, _) = self.bbox;
        self.filled
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(move |(i, _)| (bx + i as u32 % bw, by + i as u32 / bw))
    }

    /// Shoelace area of the traced boundary polygon.
    pub fn area(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .contour
            .iter()
            .map(|&(x, y)| (f64::from(x), f64::from(y)))
            .collect();
        geometry::polygon_area(&pts)
    }
}

/// Outermost contours: 8-connected regions touching the background that is
/// 4-connected to the raster border. Regions nested inside another region's
/// hole are not reported.
pub fn external_contours(binary: &GrayImage) -> Vec<ExternalContour> {
    let (w, h) = (binary.width() as i64, binary.height() as i64);
    let raw = binary.as_raw();
    let set = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && raw[(y * w + x) as usize] > 0;

    // Background reachable from outside the raster.
    let mut outer = vec![false; raw.len()];
    let mut stack: Vec<(i64, i64)> = Vec::new();
    for x in 0..w {
        stack.push((x, 0));
        stack.push((x, h - 1));
    }
    for y in 0..h {
        stack.push((0, y));
        stack.push((w - 1, y));
    }
    while let Some((x, y)) = stack.pop() {
        if x < 0 || y < 0 || x >= w || y >= h {
            continue;
        }
        let i = (y * w + x) as usize;
        if outer[i] || raw[i] > 0 {
            continue;
        }
        outer[i] = true;
        stack.extend([(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]);
    }
    let is_outer = |x: i64, y: i64| x < 0 || y < 0 || x >= w || y >= h || outer[(y * w + x) as usize];

    let (labels, comps) = geometry::components(binary);
    let mut out = Vec::new();
    for (k, comp) in comps.iter().enumerate() {
        let label = k as u32 + 1;
        let external = comp.pixels.iter().any(|&(x, y)| {
            let (x, y) = (i64::from(x), i64::from(y));
            is_outer(x + 1, y) || is_outer(x - 1, y) || is_outer(x, y + 1) || is_outer(x, y - 1)
        });
        if !external {
            continue;
        }
        let start = *comp
            .pixels
            .iter()
            .min_by_key(|&&(x, y)| (y, x))
            .expect("component is non-empty");
        let in_comp = |x: i64, y: i64| set(x, y) && labels[(y * w + x) as usize] == label;
        let contour = geometry::trace_boundary(in_comp, start);
        let (bx, by, bw, bh) = comp.bbox;
        out.push(ExternalContour {
            contour,
            bbox: comp.bbox,
            filled: fill_region(bw, bh, |x, y| in_comp(i64::from(bx + x), i64::from(by + y))),
        });
    }
    out
}

/// Region plus enclosed holes, over a `bw x bh` window: every window pixel
/// not 4-reachable from outside the window through non-region pixels.
fn fill_region(bw: u32, bh: u32, in_region: impl Fn(u32, u32) -> bool) -> Vec<bool> {
    let (pw, ph) = (bw as i64 + 2, bh as i64 + 2);
    let mut seen = vec![false; (pw * ph) as usize];
    let mut stack = vec![(0i64, 0i64)];
    seen[0] = true;
    while let Some((x, y)) = stack.pop() {
        for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if nx < 0 || ny < 0 || nx >= pw || ny >= ph {
                continue;
            }
            let i = (ny * pw + nx) as usize;
            if seen[i] {
                continue;
            }
            let inside = nx >= 1 && ny >= 1 && nx <= bw as i64 && ny <= bh as i64;
            if inside && in_region((nx - 1) as u32, (ny - 1) as u32) {
                continue;
            }
            seen[i] = true;
            stack.push((nx, ny));
        }
    }
    let mut filled = Vec::with_capacity((bw * bh) as usize);
    for y in 0..bh as i64 {
        for x in 0..bw as i64 {
            filled.push(!seen[((y + 1) * pw + x + 1) as usize]);
        }
    }
    filled
}

/// Mean green channel of `image` over the contour's filled interior.
pub fn mean_green(image: &RgbImage, contour: &ExternalContour) -> f64 {
    let (sum, n) = contour
        .filled_pixels()
        .fold((0u64, 0u64), |(s, n), (x, y)| {
            (s + u64::from(image.get_pixel(x, y).0[1]), n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Intermediate rasters of the locator, for inspection.
#[derive(Debug, Clone)]
pub struct LocatorStages {
    pub filtered: RgbImage,
    pub edges: GrayImage,
    pub dilated: GrayImage,
}

pub fn locator_stages(image: &RgbImage, cfg: &LocatorConfig) -> LocatorStages {
    let filtered = hsv_filter(image, &cfg.hsv);
    let edges = canny(&raster::to_gray(&filtered), cfg.sigma, cfg.t_lo, cfg.t_hi);
    let dilated = dilate(&edges, cfg.kernel, cfg.iterations);
    LocatorStages {
        filtered,
        edges,
        dilated,
    }
}

/// Size and greenness pruning of one contour.
pub fn passes_filters(
    bbox: (u32, u32, u32, u32),
    mean_green: f64,
    image_dims: (u32, u32),
    cfg: &LocatorConfig,
) -> bool {
    let (_, _, w, h) = bbox;
    f64::from(w) >= cfg.min_frac * f64::from(image_dims.0)
        && f64::from(h) >= cfg.min_frac * f64::from(image_dims.1)
        && mean_green >= cfg.green_threshold
}

/// Leaf candidates ordered by descending contour area, then by bounding-box
/// position.
pub fn find_candidates(image: &RgbImage, cfg: &LocatorConfig) -> Vec<LeafCandidate> {
    let stages = locator_stages(image, cfg);
    let mut kept: Vec<(f64, LeafCandidate)> = external_contours(&stages.dilated)
        .into_iter()
        .filter_map(|c| {
            let green = mean_green(image, &c);
            passes_filters(c.bbox, green, image.dimensions(), cfg).then(|| {
                let area = c.area();
                let cand = LeafCandidate {
                    midpoint: midpoint(c.bbox),
                    bbox: c.bbox,
                    mean_green: green,
                    contour: c.contour,
                };
                (area, cand)
            })
        })
        .collect();
    kept.sort_by(|(a, ca), (b, cb)| {
        b.total_cmp(a)
            .then_with(|| (ca.bbox.1, ca.bbox.0).cmp(&(cb.bbox.1, cb.bbox.0)))
    });
    kept.into_iter().map(|(_, c)| c).collect()
}

/// Render a candidate overlay: bounding boxes in white, midpoints in red.
pub fn draw_candidates(image: &RgbImage, candidates: &[LeafCandidate]) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = out.dimensions();
    for c in candidates {
        let (x, y, bw, bh) = c.bbox;
        for i in 0..bw {
            out.put_pixel(x + i, y, image::Rgb([255, 255, 255]));
            out.put_pixel(x + i, y + bh - 1, image::Rgb([255, 255, 255]));
        }
        for j in 0..bh {
            out.put_pixel(x, y + j, image::Rgb([255, 255, 255]));
            out.put_pixel(x + bw - 1, y + j, image::Rgb([255, 255, 255]));
        }
        let (mx, my) = (c.midpoint.0 as i64, c.midpoint.1 as i64);
        for d in -3..=3i64 {
            for (px, py) in [(mx + d, my), (mx, my + d)] {
                if px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h {
                    out.put_pixel(px as u32, py as u32, image::Rgb([255, 0, 0]));
                }
            }
        }
    }
    out
}

/// Binary raster of a contour's filled interior at full image size.
pub fn filled_mask(width: u32, height: u32, contour: &ExternalContour) -> GrayImage {
    let mut m = GrayImage::new(width, height);
    for (x, y) in contour.filled_pixels() {
        m.put_pixel(x, y, Luma([ON]));
    }
    m
}
