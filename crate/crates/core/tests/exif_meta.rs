mod common;

use common::{dms_degrees, random_dms, ExifSpec};
use image::{Rgb, RgbImage};
use phenopipe::exif::{self, estimate_leaf_size, parse_exif, FocalPlaneUnit, Rational};
use phenopipe::pipeline::{exif_stage, write_exif_outputs};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn full_spec() -> ExifSpec {
    ExifSpec {
        size: Some((4000, 3000)),
        resolution: Some((72, 72)),
        focal_length: Some((50, 1)),
        focal_plane_res: Some(((1000, 1), (1000, 1))),
        focal_plane_unit: Some(3),
        subject_distance: Some((105, 100)),
        latitude: Some(('N', [(35, 1), (55, 1), (3000, 100)])),
        longitude: Some(('W', [(84, 1), (18, 1), (1234, 100)])),
    }
}

#[test]
fn gps_decodes_within_tolerance_on_crafted_jpegs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0f64;
    for i in 0..100 {
        let lat_ref = if rng.gen_bool(0.5) { 'N' } else { 'S' };
        let lon_ref = if rng.gen_bool(0.5) { 'E' } else { 'W' };
        let (lat, lon) = (random_dms(&mut rng, 90), random_dms(&mut rng, 180));
        let spec = ExifSpec {
            size: Some((rng.gen_range(100..8000), rng.gen_range(100..6000))),
            latitude: Some((lat_ref, lat)),
            longitude: Some((lon_ref, lon)),
            ..Default::default()
        };
        let (rec, warning) = parse_exif(&format!("g{i}.jpg"), &spec.jpeg());
        assert!(warning.is_none(), "{warning:?}");
        let dlat = (rec.latitude_deg.unwrap() - dms_degrees(lat_ref, lat)).abs();
        let dlon = (rec.longitude_deg.unwrap() - dms_degrees(lon_ref, lon)).abs();
        worst = worst.max(dlat).max(dlon);
        assert_eq!((rec.width_px, rec.height_px), (spec.size.map(|s| s.0), spec.size.map(|s| s.1)));
    }
    assert!(worst < 1e-9, "worst error {worst}");
}

#[test]
fn every_tag_decodes() {
    let rec = parse_exif("f.jpg", &full_spec().jpeg()).0;
    assert_eq!(rec.width_px, Some(4000));
    assert_eq!(rec.height_px, Some(3000));
    assert_eq!(rec.x_resolution, Rational::new(72, 1));
    assert_eq!(rec.focal_length_mm, Rational::new(50, 1));
    assert_eq!(rec.focal_plane_x_res, Rational::new(1000, 1));
    assert_eq!(rec.focal_plane_unit, Some(FocalPlaneUnit::Cm));
    assert_eq!(rec.subject_distance_m, Rational::new(105, 100));
    assert!((rec.latitude_deg.unwrap() - (35.0 + 55.0 / 60.0 + 30.0 / 3600.0)).abs() < 1e-12);
    assert!(rec.longitude_deg.unwrap() < 0.0);
}

#[test]
fn hand_evaluated_leaf_size() {
    // f = 5 cm, d = 105 cm: magnification (105 - 5) / 5 = 20; 500 px at
    // 1000 px/cm is 0.5 cm on the sensor, 10 cm on the leaf.
    let rec = parse_exif("s.jpg", &full_spec().jpeg()).0;
    let (w, h) = estimate_leaf_size(&rec, (500.0, 250.0)).unwrap().unwrap();
    assert!((w - 10.0).abs() < 1e-6, "{w}");
    assert!((h - 5.0).abs() < 1e-6, "{h}");
}

#[test]
fn files_without_tags_are_all_null() {
    let img = RgbImage::from_pixel(8, 8, Rgb([1, 2, 3]));
    let mut png = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png).unwrap();
    let mut jpg = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut jpg), image::ImageFormat::Jpeg).unwrap();
    for (name, bytes) in [("a.png", png), ("a.jpg", jpg), ("empty.jpg", Vec::new()), ("junk.jpg", b"\xff\xd8garbage".to_vec())] {
        let (rec, _) = parse_exif(name, &bytes);
        assert!(rec.is_all_null(), "{name}: {rec:?}");
        assert_eq!(rec.filename, name);
        assert_eq!(estimate_leaf_size(&rec, (10.0, 10.0)).unwrap(), None);
    }
}

#[test]
fn truncated_exif_warns_and_nulls() {
    let jpeg = full_spec().jpeg();
    let at = jpeg.windows(6).position(|w| w == b"Exif\0\0").unwrap();
    let cut = &jpeg[..at + 30];
    let (rec, warning) = parse_exif("t.jpg", cut);
    assert!(rec.is_all_null());
    assert!(warning.is_some());
}

#[test]
fn size_is_null_exactly_when_a_size_tag_is_missing() {
    for mask in 0u32..32 {
        let mut spec = full_spec();
        if mask & 1 == 0 {
            spec.focal_length = None;
        }
        if mask & 2 == 0 || mask & 4 == 0 {
            // The writer sets both plane resolutions together; drop both.
            spec.focal_plane_res = None;
        }
        if mask & 8 == 0 {
            spec.focal_plane_unit = None;
        }
        if mask & 16 == 0 {
            spec.subject_distance = None;
        }
        let rec = parse_exif("m.jpg", &spec.jpeg()).0;
        let complete = mask & 1 != 0 && mask & 6 == 6 && mask & 8 != 0 && mask & 16 != 0;
        assert_eq!(exif::size_estimable(&rec), complete, "mask {mask:05b}");
        assert_eq!(estimate_leaf_size(&rec, (3.0, 4.0)).unwrap().is_some(), complete, "mask {mask:05b}");
    }
}

#[test]
fn png_exif_chunk_is_read() {
    let img = RgbImage::from_pixel(20, 10, Rgb([0, 120, 0]));
    let png = common::png_with_exif(&img, &full_spec().tiff());
    assert!(image::load_from_memory(&png).is_ok(), "still a valid PNG");
    let rec = parse_exif("p.png", &png).0;
    assert_eq!(rec.width_px, Some(4000));
    assert!(rec.latitude_deg.is_some());
}

#[test]
fn stage_writes_gps_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let with = dir.path().join("a.jpg");
    let without = dir.path().join("b.jpg");
    std::fs::write(&with, full_spec().jpeg()).unwrap();
    std::fs::write(&without, ExifSpec::default().jpeg()).unwrap();
    let out = exif_stage(&[with, without]).unwrap();
    assert_eq!(out.gps.rows.len(), 1);
    write_exif_outputs(&out, dir.path()).unwrap();
    let gps = std::fs::read_to_string(dir.path().join("gps.csv")).unwrap();
    assert_eq!(gps.lines().count(), 2);
    assert!(gps.starts_with("filename,latitude,longitude\na.jpg,"));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("SubjectDistance"));
    assert_eq!(out.report.missing_counts.get("SubjectDistance").copied(), Some(1));

    let empty = exif_stage(&[]).unwrap();
    assert_eq!(empty.gps.to_csv().unwrap(), "filename,latitude,longitude\n");
}

proptest! {
    #[test]
    fn size_is_linear_in_pixels(w in 0.0f64..5000.0, h in 0.0f64..5000.0, k in 1.0f64..8.0) {
        let rec = parse_exif("s.jpg", &full_spec().jpeg()).0;
        let (a, b) = estimate_leaf_size(&rec, (w, h)).unwrap().unwrap();
        let (c, d) = estimate_leaf_size(&rec, (k * w, k * h)).unwrap().unwrap();
        prop_assert!((c - k * a).abs() <= 1e-9 * c.abs().max(1.0));
        prop_assert!((d - k * b).abs() <= 1e-9 * d.abs().max(1.0));
    }
}
