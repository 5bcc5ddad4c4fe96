use image::{Rgb, RgbImage};
use phenopipe::leaf_locator::{find_candidates, midpoint, LeafCandidate, LocatorConfig};
use phenopipe::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean green over pixels whose centers lie inside the contour polygon or on
/// the contour itself (even-odd ray casting).
fn polygon_mean_green(image: &RgbImage, c: &LeafCandidate) -> f64 {
    let pts: Vec<(f64, f64)> = c.contour.iter().map(|&(x, y)| (f64::from(x), f64::from(y))).collect();
    let on_contour: std::collections::HashSet<(u32, u32)> = c.contour.iter().copied().collect();
    let (bx, by, bw, bh) = c.bbox;
    let (mut sum, mut n) = (0.0, 0usize);
    for y in by..by + bh {
        for x in bx..bx + bw {
            let (px, py) = (f64::from(x), f64::from(y));
            let mut inside = false;
            for i in 0..pts.len() {
                let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                if (a.1 > py) != (b.1 > py) && px < a.0 + (py - a.1) * (b.0 - a.0) / (b.1 - a.1) {
                    inside = !inside;
                }
            }
            if inside || on_contour.contains(&(x, y)) {
                sum += f64::from(image.get_pixel(x, y).0[1]);
                n += 1;
            }
        }
    }
    sum / n.max(1) as f64
}

#[test]
fn recall_on_synthetic_scenes() {
    let cfg = LocatorConfig::default();
    let (mut planted, mut found, mut violations) = (0, 0, 0);
    for seed in 0..100u64 {
        let scene = synth::scene(seed);
        let (w, h) = scene.image.dimensions();
        let cands = find_candidates(&scene.image, &cfg);
        for c in &cands {
            let (_, _, bw, bh) = c.bbox;
            let small = f64::from(bw) < 0.05 * f64::from(w) || f64::from(bh) < 0.05 * f64::from(h);
            if small || c.mean_green < 100.0 {
                violations += 1;
            }
            let xs = c.contour.iter().map(|p| p.0);
            let ys = c.contour.iter().map(|p| p.1);
            let (x0, x1) = (xs.clone().min().unwrap(), xs.max().unwrap());
            let (y0, y1) = (ys.clone().min().unwrap(), ys.max().unwrap());
            assert_eq!(c.bbox, (x0, y0, x1 - x0 + 1, y1 - y0 + 1), "bbox encloses the contour");
            assert!((polygon_mean_green(&scene.image, c) - c.mean_green).abs() < 3.0);
        }
        for leaf in &scene.leaves {
            planted += 1;
            if cands.iter().any(|c| leaf.spec.contains(c.midpoint.0, c.midpoint.1)) {
                found += 1;
            }
        }
    }
    let recall = found as f64 / planted as f64;
    assert!(recall >= 0.9, "recall {recall} ({found}/{planted})");
    assert_eq!(violations, 0);
}

#[test]
fn plain_soil_and_distractors_only() {
    let mut img = RgbImage::from_pixel(200, 150, Rgb(synth::SOIL));
    for y in 40..60 {
        for x in 20..160 {
            img.put_pixel(x, y, Rgb([120, 80, 40]));
        }
    }
    for y in 80..120 {
        for x in 50..110 {
            img.put_pixel(x, y, Rgb([250, 250, 250]));
        }
    }
    assert!(find_candidates(&img, &LocatorConfig::default()).is_empty());
}

#[test]
fn candidates_are_deterministic() {
    let scene = synth::scene(5);
    let cfg = LocatorConfig::default();
    assert_eq!(find_candidates(&scene.image, &cfg), find_candidates(&scene.image, &cfg));
}

#[test]
fn midpoint_exact_on_random_rects() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let r = (rng.gen::<u32>() >> 2, rng.gen::<u32>() >> 2, rng.gen::<u32>() >> 2, rng.gen::<u32>() >> 2);
        let (mx, my) = midpoint(r);
        // Twice the midpoint is an integer below 2^32, exactly representable.
        assert_eq!(2.0 * mx, f64::from(r.0) * 2.0 + f64::from(r.2));
        assert_eq!(2.0 * my, f64::from(r.1) * 2.0 + f64::from(r.3));
    }
}

proptest! {
    #[test]
    fn midpoint_matches_integer_arithmetic(x in any::<u32>(), y in any::<u32>(), w in any::<u32>(), h in any::<u32>()) {
        let (mx, my) = midpoint((x, y, w, h));
        prop_assert_eq!((2.0 * mx) as u64, 2 * u64::from(x) + u64::from(w));
        prop_assert_eq!((2.0 * my) as u64, 2 * u64::from(y) + u64::from(h));
        prop_assert_eq!(mx.fract() == 0.5, w % 2 == 1);
    }
}
