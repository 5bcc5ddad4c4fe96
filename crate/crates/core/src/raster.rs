//! Pixel-level primitives shared by the OCR ladder, the leaf locator and the
//! segmenter: color conversion, rotation, thresholding, smoothing and
//! connected-component bookkeeping.
//!
//! Binary rasters are `GrayImage`s holding only 0 and 255. Geometry uses the
//! pixel-center convention: pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and its
//! center sits at `(i + 0.5, j + 0.5)`.

use image::{GrayImage, Luma, Rgb, RgbImage};

pub const ON: u8 = 255;

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv(px: [u8; 3]) -> (f64, f64, f64) {
    let r = f64::from(px[0]) / 255.0;
    let g = f64::from(px[1]) / 255.0;
    let b = f64::from(px[2]) / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue.rem_euclid(360.0), sat, max)
}

/// Inverse of [`rgb_to_hsv`], rounding to the nearest 8-bit value.
pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let c = val * sat;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    let q = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Integer luma with the usual 0.299/0.587/0.114 weights.
pub fn luma(px: [u8; 3]) -> u8 {
    let v = 299 * u32::from(px[0]) + 587 * u32::from(px[1]) + 114 * u32::from(px[2]);
    ((v + 500) / 1000) as u8
}

pub fn to_gray(image: &RgbImage) -> GrayImage {
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        Luma([luma(image.get_pixel(x, y).0)])
    })
}

pub fn gray_to_rgb(gray: &GrayImage) -> RgbImage {
    RgbImage::from_fn(gray.width(), gray.height(), |x, y| {
        let v = gray.get_pixel(x, y).0[0];
        Rgb([v, v, v])
    })
}

/// Exact sine/cosine for multiples of 90 degrees, `sin_cos` otherwise.
fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// A rotation about the image center, counterclockwise as seen on screen,
/// onto a canvas just large enough to hold every source pixel.
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    sin: f64,
    cos: f64,
    src_center: (f64, f64),
    dst_center: (f64, f64),
    pub width: u32,
    pub height: u32,
}

impl Rotation {
    pub fn new(src_width: u32, src_height: u32, degrees_ccw: f64) -> Self {
        let (sin, cos) = sin_cos_deg(degrees_ccw);
        let (w, h) = (f64::from(src_width), f64::from(src_height));
        let out_w = (w * cos.abs() + h * sin.abs() - 1e-9).ceil().max(1.0);
        let out_h = (w * sin.abs() + h * cos.abs() - 1e-9).ceil().max(1.0);
        Rotation {
            sin,
            cos,
            src_center: (w / 2.0, h / 2.0),
            dst_center: (out_w / 2.0, out_h / 2.0),
            width: out_w as u32,
            height: out_h as u32,
        }
    }

    /// Source coordinates of a destination point.
    pub fn to_source(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.dst_center.0;
        let dy = y - self.dst_center.1;
        (
            self.src_center.0 + dx * self.cos - dy * self.sin,
            self.src_center.1 + dx * self.sin + dy * self.cos,
        )
    }

    /// Destination coordinates of a source point.
    pub fn to_dest(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.src_center.0;
        let dy = y - self.src_center.1;
        (
            self.dst_center.0 + dx * self.cos + dy * self.sin,
            self.dst_center.1 - dx * self.sin + dy * self.cos,
        )
    }
}

/// Bilinear sample of channel values at continuous coordinates; samples
/// outside the raster read as zero.
fn bilinear<const N: usize>(
    width: u32,
    height: u32,
    fetch: impl Fn(u32, u32) -> [f64; N],
    x: f64,
    y: f64,
) -> [f64; N] {
    let fx = x - 0.5;
    let fy = y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let mut acc = [0.0; N];
    for (oy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
        for (ox, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
            let weight = wx * wy;
            if weight == 0.0 {
                continue;
            }
            let sx = x0 + ox;
            let sy = y0 + oy;
            if sx < 0.0 || sy < 0.0 || sx >= f64::from(width) || sy >= f64::from(height) {
                continue;
            }
            let v = fetch(sx as u32, sy as u32);
            for c in 0..N {
                acc[c] += weight * v[c];
            }
        }
    }
    acc
}

/// Rotate an RGB raster counterclockwise about its center, expanding the
/// canvas; uncovered pixels are black.
pub fn rotate_rgb(image: &RgbImage, degrees_ccw: f64) -> RgbImage {
    let rot = Rotation::new(image.width(), image.height(), degrees_ccw);
    rotate_rgb_with(image, &rot)
}

pub fn rotate_rgb_with(image: &RgbImage, rot: &Rotation) -> RgbImage {
    let (w, h) = image.dimensions();
    let fetch = |x: u32, y: u32| {
        let p = image.get_pixel(x, y).0;
        [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])]
    };
    RgbImage::from_fn(rot.width, rot.height, |x, y| {
        let (sx, sy) = rot.to_source(f64::from(x) + 0.5, f64::from(y) + 0.5);
        let v = bilinear(w, h, fetch, sx, sy);
        Rgb(v.map(|c| c.round().clamp(0.0, 255.0) as u8))
    })
}

/// Rotate a binary mask, returning per-pixel coverage in `[0, 1]` on the
/// rotated canvas (row-major).
pub fn rotate_coverage(mask: &GrayImage, rot: &Rotation) -> Vec<f64> {
    let (w, h) = mask.dimensions();
    let fetch = |x: u32, y: u32| [if mask.get_pixel(x, y).0[0] > 0 { 1.0 } else { 0.0 }];
    let mut out = Vec::with_capacity(rot.width as usize * rot.height as usize);
    for y in 0..rot.height {
        for x in 0..rot.width {
            let (sx, sy) = rot.to_source(f64::from(x) + 0.5, f64::from(y) + 0.5);
            out.push(bilinear(w, h, fetch, sx, sy)[0]);
        }
    }
    out
}

/// Adaptive binary threshold against the local arithmetic mean: a pixel is
/// set to 255 when it exceeds `mean - offset` over a `block x block` window
/// (edge pixels replicated), and to 0 otherwise.
pub fn adaptive_threshold_mean(gray: &GrayImage, block: u32, offset: i32) -> GrayImage {
    assert!(block % 2 == 1 && block >= 3, "block size must be odd and >= 3");
    let (w, h) = gray.dimensions();
    let radius = (block / 2) as i64;
    let (wi, hi) = (i64::from(w), i64::from(h));
    let at = |x: i64, y: i64| -> i64 {
        i64::from(gray.get_pixel(x.clamp(0, wi - 1) as u32, y.clamp(0, hi - 1) as u32).0[0])
    };

    // Horizontal running sums with replicated borders.
    let mut rows = vec![0i64; (w * h) as usize];
    for y in 0..hi {
        let mut sum: i64 = (-radius..=radius).map(|dx| at(dx, y)).sum();
        for x in 0..wi {
            rows[(y * wi + x) as usize] = sum;
            sum += at(x + radius + 1, y) - at(x - radius, y);
        }
    }
    let row_at = |x: i64, y: i64| rows[(y.clamp(0, hi - 1) * wi + x) as usize];

    let n = i64::from(block) * i64::from(block);
    let mut out = GrayImage::new(w, h);
    for x in 0..wi {
        let mut sum: i64 = (-radius..=radius).map(|dy| row_at(x, dy)).sum();
        for y in 0..hi {
            let src = at(x, y);
            let on = src * n > sum - i64::from(offset) * n;
            out.put_pixel(x as u32, y as u32, Luma([if on { ON } else { 0 }]));
            sum += row_at(x, y + radius + 1) - row_at(x, y - radius);
        }
    }
    out
}

/// Separable Gaussian smoothing with reflected borders; kernel radius is
/// `ceil(3 sigma)`.
pub fn gaussian_blur(gray: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        if n == 1 {
            return 0;
        }
        let period = 2 * (n - 1);
        let mut m = i.rem_euclid(period);
        if m >= n {
            m = period - m;
        }
        m as usize
    };

    let src: Vec<f64> = gray.as_raw().iter().map(|&v| f64::from(v)).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - radius, w);
                acc += weight * src[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - radius, h);
                acc += weight * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Number of set pixels in a binary raster.
pub fn count_on(mask: &GrayImage) -> usize {
    mask.as_raw().iter().filter(|&&v| v > 0).count()
}

/// Tight bounding box `(x, y, w, h)` of the set pixels, if any.
pub fn mask_bbox(mask: &GrayImage) -> Option<(u32, u32, u32, u32)> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    let mut any = false;
    for (x, y, p) in mask.enumerate_pixels() {
        if p.0[0] > 0 {
            any = true;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
    }
    any.then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}

/// Fill every region of unset pixels that is not 4-connected to the raster
/// border.
pub fn fill_holes(mask: &GrayImage) -> GrayImage {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let raw = mask.as_raw();
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    for x in 0..w {
        stack.push((x, 0));
        stack.push((x, h - 1));
    }
    for y in 0..h {
        stack.push((0, y));
        stack.push((w - 1, y));
    }
    while let Some((x, y)) = stack.pop() {
        let i = y * w + x;
        if outside[i] || raw[i] > 0 {
            continue;
        }
        outside[i] = true;
        if x > 0 {
            stack.push((x - 1, y));
        }
        if x + 1 < w {
            stack.push((x + 1, y));
        }
        if y > 0 {
            stack.push((x, y - 1));
        }
        if y + 1 < h {
            stack.push((x, y + 1));
        }
    }
    let data = outside.iter().map(|&o| if o { 0 } else { ON }).collect();
    GrayImage::from_raw(w as u32, h as u32, data).expect("dimensions match")
}

/// 64-bit FNV-1a, used for stable per-image seed derivation and cache keys.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_round_trip_on_primaries() {
        assert_eq!(rgb_to_hsv([0, 255, 0]), (120.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([255, 0, 0]).0, 0.0);
        assert_eq!(rgb_to_hsv([0, 0, 0]), (0.0, 0.0, 0.0));
        for px in [[12u8, 200, 40], [250, 250, 10], [90, 60, 30], [5, 5, 5]] {
            let (h, s, v) = rgb_to_hsv(px);
            assert_eq!(hsv_to_rgb(h, s, v), px);
        }
    }

    #[test]
    fn quarter_turn_is_exact() {
        let img = RgbImage::from_fn(5, 3, |x, y| Rgb([(x * 10) as u8, (y * 10) as u8, 7]));
        let rot = rotate_rgb(&img, 90.0);
        assert_eq!(rot.dimensions(), (3, 5));
        // Counterclockwise on screen: the top-right source pixel lands top-left.
        assert_eq!(rot.get_pixel(0, 0), img.get_pixel(4, 0));
        assert_eq!(rot.get_pixel(2, 4), img.get_pixel(0, 2));
    }

    #[test]
    fn rotation_maps_are_inverse() {
        let rot = Rotation::new(40, 25, 33.0);
        let (dx, dy) = rot.to_dest(3.5, 20.25);
        let (sx, sy) = rot.to_source(dx, dy);
        assert!((sx - 3.5).abs() < 1e-9 && (sy - 20.25).abs() < 1e-9);
    }

    #[test]
    fn threshold_of_step() {
        let gray = GrayImage::from_fn(40, 10, |x, _| Luma([if x < 20 { 30 } else { 200 }]));
        let t = adaptive_threshold_mean(&gray, 31, 10);
        assert_eq!(t.get_pixel(0, 5).0[0], ON); // far from the step: uniform window
        assert_eq!(t.get_pixel(19, 5).0[0], 0); // dark side next to the step
        assert_eq!(t.get_pixel(20, 5).0[0], ON);
    }

    #[test]
    fn blur_preserves_constant() {
        let gray = GrayImage::from_pixel(9, 7, Luma([77]));
        assert!(gaussian_blur(&gray, 1.4).iter().all(|v| (v - 77.0).abs() < 1e-9));
    }

    #[test]
    fn holes_are_filled() {
        let mut ring = GrayImage::new(7, 7);
        for i in 1..6 {
            for j in [1, 5] {
                ring.put_pixel(i, j, Luma([ON]));
                ring.put_pixel(j, i, Luma([ON]));
            }
        }
        let filled = fill_holes(&ring);
        assert_eq!(count_on(&filled), 25);
        assert_eq!(mask_bbox(&filled), Some((1, 1, 5, 5)));
    }
}
