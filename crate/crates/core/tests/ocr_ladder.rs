use std::path::PathBuf;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use phenopipe::label_parser::{default_parser, Treatment};
use phenopipe::ocr::{self, AugmentConfig, OcrStage, StubBackend, StubSource};
use phenopipe::pipeline::read_labels_stage;
use phenopipe::sheet::TreatmentSource;

fn write_images(dir: &std::path::Path, scripts: &[(&str, Option<&str>)]) -> Vec<PathBuf> {
    let img = RgbImage::from_pixel(40, 30, Rgb([200, 200, 190]));
    scripts
        .iter()
        .map(|(name, script)| {
            let path = dir.join(name);
            img.save(&path).unwrap();
            if let Some(s) = script {
                std::fs::write(path.with_extension("txt"), s).unwrap();
            }
            path
        })
        .collect()
}

#[test]
fn first_rung_success_stops_the_ladder() {
    let backend = StubBackend::from_sections(["D B1 R8 P32 BESC-34"]);
    let img = RgbImage::new(20, 20);
    let (res, rec) = ocr::read_label("a.png", &img, &backend, default_parser(), &AugmentConfig::default());
    assert_eq!(res.stage_used, Some(OcrStage::Original));
    assert_eq!(backend.calls(), 1);
    assert_eq!(rec.treatment, Some(Treatment::D));
    assert_eq!((rec.block, rec.row, rec.position), (Some(1), Some(8), Some(32)));
    assert_eq!(rec.genotype.as_deref(), Some("BESC-34"));
    assert_eq!(rec.filename, "a.png");
}

#[test]
fn each_rung_is_tried_in_order() {
    for (k, stage) in OcrStage::LADDER.iter().enumerate() {
        let mut sections = vec!["~~"; k];
        sections.push("C B2");
        let backend = StubBackend::from_sections(sections);
        let (res, rec) = ocr::read_label("x.png", &RgbImage::new(8, 8), &backend, default_parser(), &AugmentConfig::default());
        assert_eq!(res.stage_used, Some(*stage));
        assert_eq!(res.attempts.len(), k + 1);
        assert!(res.attempts[..k].iter().all(|a| !a.succeeded));
        assert_eq!(rec.block, Some(2));
    }
}

#[test]
fn exhausted_ladder_yields_nulls() {
    let backend = StubBackend::from_sections(["", "noise", "??", "..."]);
    let (res, rec) = ocr::read_label("x.png", &RgbImage::new(8, 8), &backend, default_parser(), &AugmentConfig::default());
    assert_eq!(res.stage_used, None);
    assert_eq!(res.attempts.len(), 4);
    assert!(!rec.any_field());
    assert!(res.error.is_none());
}

#[test]
fn batch_isolates_failures_and_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = write_images(
        dir.path(),
        &[
            ("b.png", Some("C B1 R10 P12 BESC-417_LM")),
            ("a.png", Some("!error")),
            ("c.png", None),
            ("d.png", Some("\n---\nD B3\n")),
        ],
    );
    let broken = dir.path().join("e.png");
    std::fs::write(&broken, b"not a png").unwrap();
    paths.push(broken);

    let source = StubSource::new(dir.path());
    let out = ocr::read_labels(&paths, &source, default_parser(), &AugmentConfig::default());
    let names: Vec<_> = out.iter().map(|(r, _)| r.filename.as_str()).collect();
    assert_eq!(names, ["b.png", "a.png", "c.png", "d.png", "e.png"]);

    assert_eq!(out[0].1.genotype.as_deref(), Some("BESC-417_LM"));
    assert!(out[1].0.error.is_some() && !out[1].1.any_field());
    assert!(out[2].0.error.is_none() && !out[2].1.any_field());
    assert_eq!(out[3].0.stage_used, Some(OcrStage::Rotated45));
    assert_eq!(out[3].1.treatment, Some(Treatment::D));
    assert!(out[4].0.error.is_some());
}

#[test]
fn stage_builds_sheet_with_ocr_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_images(
        dir.path(),
        &[("p1.png", Some("C B2 R6 P54 BESC-28_LM")), ("p2.png", Some("B1 R24"))],
    );
    let source = Arc::new(StubBackend::from_sections(["D"]));
    let (sheet, results) = read_labels_stage(&paths, &StubSource::new(dir.path()), &AugmentConfig::default()).unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(sheet.rows[0].treatment, Some(Treatment::C));
    assert_eq!(sheet.rows[0].treatment_source, Some(TreatmentSource::Ocr));
    assert_eq!(sheet.rows[1].treatment, None);
    assert_eq!(sheet.rows[1].treatment_source, None);

    // A shared backend serves every image.
    let (sheet, _) = read_labels_stage(&paths, &source, &AugmentConfig::default()).unwrap();
    assert!(sheet.rows.iter().all(|r| r.treatment == Some(Treatment::D)));
}

#[test]
fn augmented_views() {
    let mut img = RgbImage::from_pixel(60, 40, Rgb([230, 230, 230]));
    for x in 10..50 {
        img.put_pixel(x, 20, Rgb([10, 10, 10]));
    }
    let cfg = AugmentConfig::default();
    assert_eq!(ocr::augment(&img, OcrStage::Original, &cfg), img);
    let th = ocr::augment(&img, OcrStage::Thresholded, &cfg);
    assert!(th.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));
    assert_eq!(th.get_pixel(30, 20).0, [0, 0, 0]);
    assert_eq!(th.get_pixel(30, 5).0, [255, 255, 255]);
    let rot = ocr::augment(&img, OcrStage::Rotated45, &cfg);
    let side = ((60.0 + 40.0) / 2f64.sqrt()).ceil() as u32;
    assert_eq!(rot.dimensions(), (side, side));
}
