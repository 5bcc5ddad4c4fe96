//! Fixture builders and independent oracles shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::RgbImage;
use little_exif::exif_tag::ExifTag;
use little_exif::filetype::FileExtension;
use little_exif::metadata::Metadata;
use little_exif::rational::uR64;
use phenopipe::label_parser::{LabelRecord, Treatment};
use phenopipe::labels::{Category, LeafColor, LeafShape, MorphologyLabel, Splotches};
use phenopipe::ml::MultiOutputModel;
use phenopipe::morphology::{self, LeafFeatures};
use phenopipe::sheet::{ResultsSheet, SheetRow, TreatmentSource};
use phenopipe::leaf_locator::{find_candidates, LocatorConfig};
use phenopipe::ml::EnsembleModel;
use phenopipe::segmenter::{isolate_leaf, region_grow_predictor, segment_image, DEFAULT_TOLERANCE};
use phenopipe::synth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

// ---------------------------------------------------------------------------
// Label-text oracle: a hand-written scanner, no regex engine.

fn digits_at(b: &[u8], i: usize) -> usize {
    b[i..].iter().take_while(|c| c.is_ascii_digit()).count()
}

/// Value after the first `letter` immediately followed by a digit.
fn oracle_number(b: &[u8], letter: u8) -> Option<u32> {
    for i in 0..b.len() {
        if b[i] == letter && i + 1 < b.len() && b[i + 1].is_ascii_digit() {
            let n = digits_at(b, i + 1);
            return std::str::from_utf8(&b[i + 1..i + 1 + n]).ok()?.parse().ok();
        }
    }
    None
}

/// Length of the genotype match starting exactly at `i`, if any.
fn genotype_at(b: &[u8], i: usize) -> Option<usize> {
    let letters = b[i..].iter().take_while(|c| c.is_ascii_uppercase()).count();
    if letters < 2 {
        return None;
    }
    let mut j = i + letters;
    let mut groups = 0;
    while j + 1 < b.len() && b[j] == b'-' && b[j + 1].is_ascii_digit() {
        j += 1 + digits_at(b, j + 1);
        groups += 1;
    }
    if groups == 0 {
        return None;
    }
    while j + 1 < b.len() && b[j] == b'_' && b[j + 1].is_ascii_digit() {
        j += 1 + digits_at(b, j + 1);
    }
    if j + 1 < b.len() && b[j] == b'_' && b[j + 1].is_ascii_uppercase() {
        j += 1 + b[j + 1..].iter().take_while(|c| c.is_ascii_uppercase()).count();
    }
    Some(j - i)
}

pub fn oracle_parse(text: &str) -> LabelRecord {
    let b = text.as_bytes();
    let mut masked = b.to_vec();
    for i in 0..b.len() {
        if matches!(b[i], b'B' | b'R' | b'P') && i + 1 < b.len() && b[i + 1].is_ascii_digit() {
            let n = digits_at(b, i + 1);
            masked[i..i + 1 + n].fill(b' ');
        }
    }
    let genotype = (0..masked.len()).find_map(|i| {
        genotype_at(&masked, i).map(|n| String::from_utf8_lossy(&masked[i..i + n]).into_owned())
    });
    let treatment = text.split(char::is_whitespace).find_map(|tok| {
        let t = tok.trim_matches(|c| ".,:;|".contains(c));
        match t {
            "C" => Some(Treatment::C),
            "D" => Some(Treatment::D),
            _ => None,
        }
    });
    LabelRecord {
        filename: String::new(),
        treatment,
        block: oracle_number(b, b'B'),
        row: oracle_number(b, b'R'),
        position: oracle_number(b, b'P'),
        genotype,
    }
}

/// Strings mixing label-like tokens, punctuation and random bytes.
pub fn fuzz_corpus(n: usize, seed: u64) -> Vec<String> {
    const TOKENS: [&str; 24] = [
        "C", "D", "c", "d", "C.", "|D", "CD", "B1", "R10", "P32", "B", "P", "R0", "P00032",
        "BESC-34", "BESC-417_LM", "LILD-26-5_LM", "AB-1_2_X", "X-1", "BESC", "ES-", "B12-3",
        "99999999999", "_LM",
    ];
    const CHARS: &[u8] = b"ABCDEPRSXZ0123456789-_ .,:;|\tabcz";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let parts = rng.gen_range(0..9);
            let mut s = String::new();
            for _ in 0..parts {
                match rng.gen_range(0..10) {
                    0..=4 => s.push_str(TOKENS[rng.gen_range(0..TOKENS.len())]),
                    5..=7 => {
                        for _ in 0..rng.gen_range(1..6) {
                            s.push(CHARS[rng.gen_range(0..CHARS.len())] as char);
                        }
                    }
                    8 => s.push(['é', 'Ω', '\u{a0}', '—'][rng.gen_range(0..4)]),
                    _ => {}
                }
                if rng.gen_bool(0.6) {
                    s.push(if rng.gen_bool(0.9) { ' ' } else { '\n' });
                }
            }
            s
        })
        .collect()
}

// ---------------------------------------------------------------------------
// EXIF fixtures written with an independent encoder.

#[derive(Debug, Clone, Default)]
pub struct ExifSpec {
    pub size: Option<(u32, u32)>,
    pub resolution: Option<(u32, u32)>,
    pub focal_length: Option<(u32, u32)>,
    pub focal_plane_res: Option<((u32, u32), (u32, u32))>,
    /// EXIF unit code: 2 inch, 3 cm.
    pub focal_plane_unit: Option<u16>,
    pub subject_distance: Option<(u32, u32)>,
    /// `(ref, [d, m, s] rationals)` per axis.
    pub latitude: Option<(char, [(u32, u32); 3])>,
    pub longitude: Option<(char, [(u32, u32); 3])>,
}

fn r(v: (u32, u32)) -> uR64 {
    uR64 {
        nominator: v.0,
        denominator: v.1,
    }
}

impl ExifSpec {
    fn metadata(&self) -> Metadata {
        let mut m = Metadata::new();
        if let Some((w, h)) = self.size {
            m.set_tag(ExifTag::ImageWidth(vec![w]));
            m.set_tag(ExifTag::ImageHeight(vec![h]));
        }
        if let Some((x, y)) = self.resolution {
            m.set_tag(ExifTag::XResolution(vec![r((x, 1))]));
            m.set_tag(ExifTag::YResolution(vec![r((y, 1))]));
        }
        if let Some(f) = self.focal_length {
            m.set_tag(ExifTag::FocalLength(vec![r(f)]));
        }
        if let Some((x, y)) = self.focal_plane_res {
            m.set_tag(ExifTag::FocalPlaneXResolution(vec![r(x)]));
            m.set_tag(ExifTag::FocalPlaneYResolution(vec![r(y)]));
        }
        if let Some(u) = self.focal_plane_unit {
            m.set_tag(ExifTag::FocalPlaneResolutionUnit(vec![u]));
        }
        if let Some(d) = self.subject_distance {
            m.set_tag(ExifTag::SubjectDistance(vec![r(d)]));
        }
        if let Some((rf, dms)) = self.latitude {
            m.set_tag(ExifTag::GPSLatitudeRef(rf.to_string()));
            m.set_tag(ExifTag::GPSLatitude(dms.iter().map(|&v| r(v)).collect()));
        }
        if let Some((rf, dms)) = self.longitude {
            m.set_tag(ExifTag::GPSLongitudeRef(rf.to_string()));
            m.set_tag(ExifTag::GPSLongitude(dms.iter().map(|&v| r(v)).collect()));
        }
        m
    }

    /// A small JPEG carrying these tags.
    pub fn jpeg(&self) -> Vec<u8> {
        let img = RgbImage::from_pixel(16, 12, image::Rgb([90, 140, 60]));
        let mut bytes = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Jpeg)
            .unwrap();
        self.metadata().write_to_vec(&mut bytes, FileExtension::JPEG).unwrap();
        bytes
    }

    /// The TIFF structure of the EXIF block, as it would sit in a PNG eXIf chunk.
    pub fn tiff(&self) -> Vec<u8> {
        let jpeg = self.jpeg();
        let at = jpeg
            .windows(6)
            .position(|w| w == b"Exif\0\0")
            .expect("APP1 Exif segment");
        // APP1 length covers the length field, the 6-byte header and the TIFF data.
        let len = u16::from_be_bytes([jpeg[at - 2], jpeg[at - 1]]) as usize;
        jpeg[at + 6..at - 2 + len].to_vec()
    }
}

/// Decimal degrees as the value a d/m/s triple denotes.
pub fn dms_degrees(rf: char, dms: [(u32, u32); 3]) -> f64 {
    let v = |(n, d): (u32, u32)| f64::from(n) / f64::from(d);
    let deg = v(dms[0]) + v(dms[1]) / 60.0 + v(dms[2]) / 3600.0;
    if rf == 'S' || rf == 'W' {
        -deg
    } else {
        deg
    }
}

pub fn random_dms(rng: &mut ChaCha8Rng, max_deg: u32) -> [(u32, u32); 3] {
    [
        (rng.gen_range(0..max_deg), 1),
        (rng.gen_range(0..60), 1),
        (rng.gen_range(0..60_000_000), 1_000_000),
    ]
}

/// PNG bytes with `tiff` inserted as an eXIf chunk right after IHDR.
pub fn png_with_exif(img: &RgbImage, tiff: &[u8]) -> Vec<u8> {
    let mut png = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .unwrap();
    let ihdr_end = 8 + 4 + 4 + 13 + 4;
    let mut chunk = Vec::with_capacity(tiff.len() + 12);
    chunk.extend((tiff.len() as u32).to_be_bytes());
    let mut body = b"eXIf".to_vec();
    body.extend_from_slice(tiff);
    chunk.extend(&body);
    chunk.extend(crc32fast::hash(&body).to_be_bytes());
    png.splice(ihdr_end..ihdr_end, chunk);
    png
}

// ---------------------------------------------------------------------------
// Sheets.

pub fn row(name: &str) -> SheetRow {
    SheetRow::from_label(&LabelRecord::empty(name))
}

/// Sheet whose treatment is `D` exactly when splotches are medium or high.
/// Returns the sheet with `hidden` rows' treatments blanked, plus the truth.
pub fn splotch_rule_sheet(n: usize, hidden: usize, seed: u64) -> (ResultsSheet, Vec<Treatment>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let m = synth::random_label(&mut rng);
        let t = if matches!(m.splotches, Splotches::Medium | Splotches::High) {
            Treatment::D
        } else {
            Treatment::C
        };
        let mut r = row(&format!("img_{i:04}.png"));
        r.set_morphology(Some(m));
        if i >= hidden {
            r.treatment = Some(t);
            r.treatment_source = Some(TreatmentSource::Ocr);
        }
        rows.push(r);
        truth.push(t);
    }
    (ResultsSheet::new(rows).unwrap(), truth)
}

/// 1672 rows whose non-null counts are 1098/1306/1388/1414/1431 for
/// treatment, block, row, position and genotype.
pub fn info_fixture() -> ResultsSheet {
    let n = 1672;
    let rows = (0..n)
        .map(|i| {
            let mut r = row(&format!("IMG_{i:04}.JPG"));
            r.treatment = (i < 1098).then_some(if i % 2 == 0 { Treatment::C } else { Treatment::D });
            r.block = (i < 1306).then_some(1 + (i % 3) as u32);
            r.row = (i < 1388).then_some(1 + (i % 30) as u32);
            r.position = (i < 1414).then_some(1 + (i % 60) as u32);
            r.genotype = (i < 1431).then(|| "BESC-34".to_owned());
            if r.treatment.is_some() {
                r.treatment_source = Some(TreatmentSource::Ocr);
            }
            r
        })
        .collect();
    ResultsSheet::new(rows).unwrap()
}

// ---------------------------------------------------------------------------
// Models trained on synthetic crops.

pub fn all_labels() -> Vec<MorphologyLabel> {
    let mut out = Vec::new();
    for &c in LeafColor::ALL {
        for &s in LeafShape::ALL {
            for &p in Splotches::ALL {
                out.push(MorphologyLabel::new(c, s, p));
            }
        }
    }
    out
}

/// `per_label` rendered crops for each of the 64 label combinations.
pub fn morphology_samples(per_label: usize, seed: u64) -> Vec<(LeafFeatures, MorphologyLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in all_labels() {
        for _ in 0..per_label {
            let (crop, mask) = synth::render_leaf(label, &mut rng);
            out.push((morphology::extract_features(&crop, &mask).unwrap(), label));
        }
    }
    out
}

pub fn suitability_samples(n_each: usize, seed: u64) -> Vec<(LeafFeatures, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..n_each {
        let label = synth::random_label(&mut rng);
        let (crop, mask) = synth::render_leaf(label, &mut rng);
        out.push((morphology::extract_features(&crop, &mask).unwrap(), true));
        let (crop, mask) = synth::render_bad_leaf(&mut rng);
        out.push((morphology::extract_features(&crop, &mask).unwrap(), false));
    }
    out
}

pub fn train_models(seed: u64) -> (EnsembleModel, MultiOutputModel) {
    let suit = morphology::train_suitability(&suitability_samples(40, seed), None, seed).unwrap();
    let morph = morphology::train_morphology(&morphology_samples(3, seed + 1), None, seed).unwrap();
    (suit, morph)
}

pub type SuitabilitySamples = Vec<(LeafFeatures, bool)>;
pub type MorphologySamples = Vec<(LeafFeatures, MorphologyLabel)>;

/// Crops produced by the locate, regiongrow and isolate stages on training
/// scenes, labeled from the planted truth the way an annotator would: a crop
/// is suitable when its mask covers its planted leaf with IoU >= 0.9.
pub fn scene_samples(scenes: std::ops::Range<u64>) -> (SuitabilitySamples, MorphologySamples) {
    let predictor = region_grow_predictor(DEFAULT_TOLERANCE).unwrap();
    let (mut suit, mut morph) = (Vec::new(), Vec::new());
    for seed in scenes {
        let scene = synth::scene(seed);
        let cands = find_candidates(&scene.image, &LocatorConfig::default());
        let seg = segment_image(&scene.image, &cands, &predictor, seed).unwrap();
        let raster = seg.composite.raster.as_raw();
        for &v in seg.composite.leaf_ids.keys() {
            let mine = raster.iter().filter(|&&p| p == v).count();
            let (overlap, planted) = scene
                .leaves
                .iter()
                .map(|l| {
                    let m = l.mask.as_raw();
                    let inter = raster.iter().zip(m).filter(|(&p, &q)| p == v && q > 0).count();
                    (inter, l)
                })
                .max_by_key(|(inter, _)| *inter)
                .unwrap();
            let area = planted.mask.as_raw().iter().filter(|&&q| q > 0).count();
            let iou = overlap as f64 / (mine + area - overlap) as f64;
            let leaf = isolate_leaf(&scene.image, &seg.composite, v, "train").unwrap();
            let f = morphology::extract_features(&leaf.crop, &leaf.mask_crop).unwrap();
            suit.push((f, iou >= 0.9));
            if iou >= 0.9 {
                morph.push((f, planted.spec.label));
            }
        }
    }
    (suit, morph)
}

pub fn train_scene_models(scenes: std::ops::Range<u64>, seed: u64) -> (EnsembleModel, MultiOutputModel) {
    let (suit, morph) = scene_samples(scenes);
    (
        morphology::train_suitability(&suit, None, seed).unwrap(),
        morphology::train_morphology(&morph, None, seed).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// End-to-end fixture set.

pub const E2E_IMAGES: usize = 5;
/// Scene seeds the e2e models are trained on; the e2e images use 100..105.
pub const E2E_TRAIN_SCENES: std::ops::Range<u64> = 1000..1150;

pub fn e2e_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/e2e")
}

pub fn golden_path() -> PathBuf {
    manifest_dir().join("tests/golden/final.csv")
}

/// Stub-OCR script for image `i`; some tags lose the treatment or fail to
/// read until a later rung of the ladder.
fn e2e_script(i: usize, text: &str) -> String {
    let tokens: Vec<&str> = text.split(' ').collect();
    match i {
        // Unreadable at first; thresholding reveals the tag.
        1 => format!("\n---\n\n---\n{text}\n"),
        // Treatment letter hidden by a hand.
        2 => format!("{}\n", tokens[1..].join(" ")),
        // Only the genotype survives.
        3 => format!("{}\n", tokens[4]),
        _ => format!("{text}\n"),
    }
}

/// Write the five-image scene set, OCR sidecars and trained models under `dir`.
pub fn write_e2e_fixtures(dir: &Path) {
    let images = dir.join("images");
    let models = dir.join("models");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&models).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..E2E_IMAGES {
        let scene = synth::scene(100 + i as u64);
        let name = format!("plot_{i:02}.png");
        let (_, text) = synth::label_for(i, &mut rng);
        // Field 4 photo carries no EXIF, the rest carry GPS and optics.
        let bytes = if i == 4 {
            let mut v = Vec::new();
            scene
                .image
                .write_to(&mut std::io::Cursor::new(&mut v), image::ImageFormat::Png)
                .unwrap();
            v
        } else {
            let spec = ExifSpec {
                size: Some(scene.image.dimensions()),
                resolution: Some((72, 72)),
                focal_length: Some((50, 1)),
                focal_plane_res: Some(((2540, 1), (2540, 1))),
                focal_plane_unit: Some(2),
                subject_distance: (i != 3).then_some((55, 100)),
                latitude: Some(('N', [(35, 1), (55, 1), (100 * i as u32, 100)])),
                longitude: Some(('W', [(84, 1), (18, 1), (250 + 7 * i as u32, 100)])),
            };
            png_with_exif(&scene.image, &spec.tiff())
        };
        std::fs::write(images.join(&name), bytes).unwrap();
        std::fs::write(images.join(format!("plot_{i:02}.txt")), e2e_script(i, &text)).unwrap();
    }
    let (suit, morph) = train_scene_models(E2E_TRAIN_SCENES, 7);
    suit.save(&models.join("suitability.json")).unwrap();
    morph.save(&models.join("morphology.json")).unwrap();
}

/// Pipeline configuration for the committed e2e set, writing to `out`.
pub fn e2e_config(out: &Path) -> phenopipe::pipeline::PipelineConfig {
    let dir = e2e_dir();
    let mut cfg = phenopipe::pipeline::PipelineConfig::new(dir.join("images"), out);
    cfg.seed = 11;
    cfg.suitability_model = Some(dir.join("models/suitability.json"));
    cfg.morphology_model = Some(dir.join("models/morphology.json"));
    cfg
}
