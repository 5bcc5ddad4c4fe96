//! Contour tracing and planar geometry over binary rasters.

use image::GrayImage;

/// Clockwise neighbor offsets (screen coordinates, y down), starting east.
const NEIGHBORS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

const WEST: usize = 4;

fn direction_of(dx: i64, dy: i64) -> usize {
    NEIGHBORS
        .iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is a unit neighbor")
}

/// An 8-connected component of set pixels.
#[derive(Debug, Clone)]
pub struct Component {
    pub pixels: Vec<(u32, u32)>,
    /// `(x, y, w, h)`
    pub bbox: (u32, u32, u32, u32),
}

/// Label the 8-connected components of a binary raster, in raster order of
/// their first pixel. Returns the per-pixel label map (0 = background,
/// component `k` = `k + 1`) and the components.
pub fn components(mask: &GrayImage) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let raw = mask.as_raw();
    let mut labels = vec![0u32; raw.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..raw.len() {
        if raw[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = out.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i as i64 % w, i as i64 / w);
            pixels.push((x as u32, y as u32));
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if raw[j] > 0 && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        out.push(Component {
            pixels,
            bbox: (
                x0 as u32,
                y0 as u32,
                (x1 - x0 + 1) as u32,
                (y1 - y0 + 1) as u32,
            ),
        });
    }
    (labels, out)
}

/// Trace the outer boundary of the 8-connected region containing `start`
/// with Moore-neighbor tracing. `start` must be the region's first pixel in
/// raster order. Points are returned in clockwise order (screen coordinates).
pub fn trace_boundary(is_set: impl Fn(i64, i64) -> bool, start: (u32, u32)) -> Vec<(u32, u32)> {
    let s = (i64::from(start.0), i64::from(start.1));
    let mut contour = vec![start];
    let mut p = s;
    let mut back = WEST;
    let start_back = back;
    // Bounded by 4 visits per boundary pixel; the cap guards malformed input.
    for _ in 0..16_000_000usize {
        let mut next = None;
        for k in 1..=8 {
            let dir = (back + k) % 8;
            let (dx, dy) = NEIGHBORS[dir];
            if is_set(p.0 + dx, p.1 + dy) {
                next = Some(dir);
                break;
            }
        }
        let Some(dir) = next else {
            return contour; // isolated pixel
        };
        let (dx, dy) = NEIGHBORS[dir];
        let prev_dir = (dir + 7) % 8;
        let (bx, by) = NEIGHBORS[prev_dir];
        let c = (p.0 + dx, p.1 + dy);
        back = direction_of(p.0 + bx - c.0, p.1 + by - c.1);
        p = c;
        if p == s && back == start_back {
            break;
        }
        // Re-entering the start from another side does not terminate
        // Jacob's criterion, but the point is already recorded.
        if p != s {
            contour.push((p.0 as u32, p.1 as u32));
        }
    }
    contour
}

/// Boundary length of a closed 8-connected chain, using corrected chain-code
/// weights for straight, diagonal and corner steps.
pub fn chain_perimeter(contour: &[(u32, u32)]) -> f64 {
    let n = contour.len();
    if n < 2 {
        return if n == 1 { 4.0 } else { 0.0 };
    }
    let mut even = 0usize;
    let mut odd = 0usize;
    let mut corners = 0usize;
    let mut last_dir: Option<(i64, i64)> = None;
    let mut first_dir: Option<(i64, i64)> = None;
    for i in 0..n {
        let a = contour[i];
        let b = contour[(i + 1) % n];
        let d = (
            i64::from(b.0) - i64::from(a.0),
            i64::from(b.1) - i64::from(a.1),
        );
        if d == (0, 0) {
            continue;
        }
        if d.0 != 0 && d.1 != 0 {
            odd += 1;
        } else {
            even += 1;
        }
        if let Some(prev) = last_dir {
            if prev != d {
                corners += 1;
            }
        } else {
            first_dir = Some(d);
        }
        last_dir = Some(d);
    }
    if let (Some(first), Some(last)) = (first_dir, last_dir) {
        if first != last {
            corners += 1;
        }
    }
    0.980 * even as f64 + 1.406 * odd as f64 - 0.091 * corners as f64
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull (monotone chain), counterclockwise in math orientation,
/// without collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum-area enclosing rectangle of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinAreaRect {
    /// Direction of the long side, degrees in `(-90, 90]`, measured in screen
    /// coordinates (positive = clockwise on screen).
    pub long_axis_deg: f64,
    pub long_side: f64,
    pub short_side: f64,
}

/// Rotating-calipers minimum-area rectangle over the convex hull. Ties are
/// resolved toward the smallest edge angle, so axis-aligned inputs report 0.
pub fn min_area_rect(points: &[(f64, f64)]) -> MinAreaRect {
    let hull = convex_hull(points);
    if hull.len() < 2 {
        return MinAreaRect {
            long_axis_deg: 0.0,
            long_side: 0.0,
            short_side: 0.0,
        };
    }
    let mut best: Option<(f64, f64, f64, f64)> = None; // (area, angle, len_u, len_v)
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let mut angle = (b.1 - a.1).atan2(b.0 - a.0).to_degrees().rem_euclid(90.0);
        if (angle - 90.0).abs() < 1e-9 {
            angle = 0.0;
        }
        let (sin, cos) = angle.to_radians().sin_cos();
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &hull {
            let u = x * cos + y * sin;
            let v = -x * sin + y * cos;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let (lu, lv) = (umax - umin, vmax - vmin);
        let area = lu * lv;
        let better = match best {
            None => true,
            Some((ba, bang, _, _)) => {
                area < ba - 1e-9 || ((area - ba).abs() <= 1e-9 && angle < bang)
            }
        };
        if better {
            best = Some((area, angle, lu, lv));
        }
    }
    let (_, angle, lu, lv) = best.expect("hull has edges");
    let (long_axis, long, short) = if lu >= lv {
        (angle, lu, lv)
    } else {
        (angle + 90.0, lv, lu)
    };
    let long_axis_deg = if long_axis > 90.0 {
        long_axis - 180.0
    } else {
        long_axis
    };
    MinAreaRect {
        long_axis_deg,
        long_side: long,
        short_side: short,
    }
}

/// Corner points of every set pixel, the point set whose hull encloses the
/// pixels' full area.
pub fn pixel_corners(pixels: &[(u32, u32)]) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(pixels.len() * 4);
    for &(x, y) in pixels {
        let (x, y) = (f64::from(x), f64::from(y));
        pts.extend([(x, y), (x + 1.0, y), (x, y + 1.0), (x + 1.0, y + 1.0)]);
    }
    pts
}
