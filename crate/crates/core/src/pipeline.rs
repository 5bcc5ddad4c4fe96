//! Stage runners over image directories and the composed run.
//!
//! Every stage reads and writes plain files, so running the stages one by
//! one over the same directories produces the same artifacts as
//! [`run_all`].

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotate::{StoreRecord, Task};
use crate::crops;
use crate::error::{Error, Result};
use crate::exif::{self, ExifRecord, FeasibilityReport, GpsTable};
use crate::label_parser::{self, LabelRecord};
use crate::labels::MorphologyLabel;
use crate::leaf_locator::{self, LeafCandidate, LocatorConfig};
use crate::ml::accuracy_score;
use crate::ml::{EnsembleModel, MultiOutputModel};
use crate::morphology::{self, LeafFeatures};
use crate::ocr::{self, AugmentConfig, OcrResult, OcrSource, StubSource};
use crate::segmenter::{self, CompositeMask, MaskPredictor, PredictorFailure};
use crate::sheet::ResultsSheet;
use crate::treatment;

pub const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

/// Label reader selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum OcrSpec {
    /// Sidecar scripts `<dir>/<stem>.txt`.
    Stub { dir: PathBuf },
    Onnx {
        rec_model: PathBuf,
        det_model: Option<PathBuf>,
        dict: Option<PathBuf>,
    },
}

impl OcrSpec {
    /// `stub:DIR` or `onnx:REC[,DET]`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("stub", dir)) if !dir.is_empty() => Ok(OcrSpec::Stub { dir: dir.into() }),
            Some(("onnx", paths)) if !paths.is_empty() => {
                let mut it = paths.splitn(2, ',');
                Ok(OcrSpec::Onnx {
                    rec_model: it.next().expect("nonempty").into(),
                    det_model: it.next().map(PathBuf::from),
                    dict: None,
                })
            }
            _ => Err(Error::InvalidInput(format!(
                "OCR backend {s:?}: expected stub:DIR or onnx:REC[,DET]"
            ))),
        }
    }

    pub fn build(&self) -> Result<Box<dyn OcrSource>> {
        match self {
            OcrSpec::Stub { dir } => Ok(Box::new(StubSource::new(dir))),
            #[cfg(feature = "onnx")]
            OcrSpec::Onnx {
                rec_model,
                det_model,
                dict,
            } => {
                let mut cfg = ocr::OnnxOcrConfig::new(rec_model);
                cfg.det_model = det_model.clone();
                cfg.dict = dict.clone();
                Ok(Box::new(Arc::new(ocr::OnnxOcrBackend::load(cfg)?)))
            }
            #[cfg(not(feature = "onnx"))]
            OcrSpec::Onnx { .. } => Err(Error::InvalidInput("built without the onnx feature".into())),
        }
    }
}

/// Mask predictor selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    Regiongrow { tolerance: f64 },
    Model { encoder: PathBuf, decoder: PathBuf },
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::Regiongrow {
            tolerance: segmenter::DEFAULT_TOLERANCE,
        }
    }
}

impl PredictorSpec {
    /// `regiongrow`, `regiongrow:TOL` or `model:ENCODER,DECODER`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("predictor {s:?}: expected regiongrow[:TOL] or model:ENC,DEC"));
        if s == "regiongrow" {
            return Ok(PredictorSpec::default());
        }
        match s.split_once(':') {
            Some(("regiongrow", tol)) => Ok(PredictorSpec::Regiongrow {
                tolerance: tol.parse().map_err(|_| bad())?,
            }),
            Some(("model", paths)) => {
                let (enc, dec) = paths.split_once(',').ok_or_else(bad)?;
                Ok(PredictorSpec::Model {
                    encoder: enc.into(),
                    decoder: dec.into(),
                })
            }
            _ => Err(bad()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn MaskPredictor>> {
        match self {
            PredictorSpec::Regiongrow { tolerance } => Ok(Arc::new(segmenter::region_grow_predictor(*tolerance)?)),
            #[cfg(feature = "onnx")]
            PredictorSpec::Model { encoder, decoder } => Ok(Arc::new(segmenter::SamPredictor::load(
                segmenter::SamConfig::new(encoder, decoder),
            )?)),
            #[cfg(not(feature = "onnx"))]
            PredictorSpec::Model { .. } => Err(Error::InvalidInput("built without the onnx feature".into())),
        }
    }
}

/// Everything that determines a run. Serialized as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub images: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub ocr: OcrSpec,
    pub augment: AugmentConfig,
    pub locator: LocatorConfig,
    pub predictor: PredictorSpec,
    pub suitability_model: Option<PathBuf>,
    pub morphology_model: Option<PathBuf>,
    /// Without one, a treatment model is trained on the rows whose
    /// treatment was read.
    pub treatment_model: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            images: PathBuf::from("images"),
            out_dir: PathBuf::from("out"),
            seed: 0,
            ocr: OcrSpec::Stub {
                dir: PathBuf::from("images"),
            },
            augment: AugmentConfig::default(),
            locator: LocatorConfig::default(),
            predictor: PredictorSpec::default(),
            suitability_model: None,
            morphology_model: None,
            treatment_model: None,
        }
    }
}

impl PipelineConfig {
    pub fn new(images: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let images = images.into();
        PipelineConfig {
            ocr: OcrSpec::Stub { dir: images.clone() },
            images,
            out_dir: out_dir.into(),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Images in `dir`, sorted by file name. Two images sharing a stem are an
/// error, since masks and crops are keyed by stem.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if path.is_file() && IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            out.push(path);
        }
    }
    out.sort_by_key(|p| ocr::file_name(p));
    let mut seen = HashMap::new();
    for p in &out {
        if let Some(prev) = seen.insert(stem(p), p.clone()) {
            return Err(Error::InvalidInput(format!(
                "{} and {} share a stem",
                prev.display(),
                p.display()
            )));
        }
    }
    Ok(out)
}

fn images_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    Ok(list_images(dir)?.into_iter().map(|p| (stem(&p), p)).collect())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Schema {
            row: i + 1,
            column: "json".into(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// OCR every image through the augmentation ladder.
pub fn read_labels_stage(
    images: &[PathBuf],
    source: &dyn OcrSource,
    augment: &AugmentConfig,
) -> Result<(ResultsSheet, Vec<OcrResult>)> {
    let parser = label_parser::default_parser();
    let results = ocr::read_labels(images, source, parser, augment);
    let records: Vec<LabelRecord> = results.iter().map(|(_, r)| r.clone()).collect();
    let sheet = ResultsSheet::from_labels(&records)?;
    Ok((sheet, results.into_iter().map(|(o, _)| o).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageCandidates {
    pub filename: String,
    pub width: u32,
    pub height: u32,
    pub candidates: Vec<LeafCandidate>,
}

pub fn locate_stage(images: &[PathBuf], cfg: &LocatorConfig) -> Result<Vec<ImageCandidates>> {
    cfg.validate()?;
    images
        .par_iter()
        .map(|path| {
            let img = ocr::load_rgb(path)?;
            Ok(ImageCandidates {
                filename: ocr::file_name(path),
                width: img.width(),
                height: img.height(),
                candidates: leaf_locator::find_candidates(&img, cfg),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub filename: String,
    /// Gray value to candidate index.
    pub leaf_ids: BTreeMap<u8, usize>,
    pub failures: Vec<PredictorFailure>,
}

/// Segment each image's candidates and write `<masks_dir>/<stem>.png`.
pub fn segment_stage(
    images_dir: &Path,
    candidates: &[ImageCandidates],
    predictor: &dyn MaskPredictor,
    seed: u64,
    masks_dir: &Path,
) -> Result<Vec<SegmentRecord>> {
    create_dir(masks_dir)?;
    candidates
        .par_iter()
        .map(|ic| {
            let path = images_dir.join(&ic.filename);
            let img = ocr::load_rgb(&path)?;
            let seg = segmenter::segment_image(
                &img,
                &ic.candidates,
                predictor,
                segmenter::image_seed(seed, &ic.filename),
            )?;
            let out = masks_dir.join(format!("{}.png", stem(Path::new(&ic.filename))));
            seg.composite.raster.save(&out).map_err(|e| Error::image(&out, e))?;
            Ok(SegmentRecord {
                filename: ic.filename.clone(),
                leaf_ids: seg.composite.leaf_ids,
                failures: seg.failures,
            })
        })
        .collect()
}

/// Isolate every leaf of every composite in `masks_dir`; returns crop ids.
pub fn crops_stage(images_dir: &Path, masks_dir: &Path, out_dir: &Path) -> Result<Vec<String>> {
    create_dir(out_dir)?;
    let images = images_by_stem(images_dir)?;
    let mut masks: Vec<PathBuf> = std::fs::read_dir(masks_dir)
        .map_err(|e| Error::io(masks_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    masks.sort();
    let per_image: Vec<Vec<String>> = masks
        .par_iter()
        .map(|mask_path| {
            let s = stem(mask_path);
            let image_path = images
                .get(&s)
                .ok_or_else(|| Error::NotFound(format!("no image for mask {}", mask_path.display())))?;
            let raster = image::open(mask_path)
                .map_err(|e| Error::image(mask_path, e))?
                .to_luma8();
            let composite = CompositeMask::from_raster(raster);
            let img = ocr::load_rgb(image_path)?;
            let leaves = segmenter::isolate_all(&img, &composite, &ocr::file_name(image_path))?;
            leaves
                .iter()
                .map(|leaf| {
                    crops::save_crop(out_dir, leaf)?;
                    Ok(crops::crop_id(&leaf.filename, leaf.leaf_id))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

pub fn crop_features(crops_dir: &Path, id: &str) -> Result<LeafFeatures> {
    let (crop, mask) = crops::load_crop(&crops::crop_path(crops_dir, id))?;
    morphology::extract_features(&crop, &mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafPrediction {
    pub crop_id: String,
    /// `None` without a suitability model, in which case every leaf is
    /// eligible.
    pub good: Option<bool>,
    /// Present for eligible leaves.
    pub morphology: Option<MorphologyLabel>,
}

/// Classify every crop and write the per-image mode into the sheet's
/// morphology cells. Images without eligible leaves get null cells.
pub fn classify_stage(
    sheet: &ResultsSheet,
    crops_dir: &Path,
    suitability: Option<&EnsembleModel>,
    morphology_model: &MultiOutputModel,
) -> Result<(ResultsSheet, Vec<LeafPrediction>)> {
    let groups = crops::group_by_image(&crops::list_crops(crops_dir)?);
    let mut out = sheet.clone();
    let mut all = Vec::new();
    let known: BTreeMap<String, usize> = out
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (stem(Path::new(&r.filename)), i))
        .collect();
    for s in groups.keys().filter(|s| !known.contains_key(*s)) {
        log::warn!("crops of {s} have no sheet row");
    }
    for (s, &row) in &known {
        let ids = groups.get(s).map(Vec::as_slice).unwrap_or_default();
        let preds: Vec<LeafPrediction> = ids
            .par_iter()
            .map(|id| {
                let f = crop_features(crops_dir, id)?;
                let good = suitability.map(|m| morphology::classify_suitability(&f, m)).transpose()?;
                let morphology = if good != Some(false) {
                    Some(morphology::classify_morphology(&f, morphology_model)?)
                } else {
                    None
                };
                Ok(LeafPrediction {
                    crop_id: id.clone(),
                    good,
                    morphology,
                })
            })
            .collect::<Result<_>>()?;
        let eligible: Vec<MorphologyLabel> = preds.iter().filter_map(|p| p.morphology).collect();
        out.rows[row].set_morphology(morphology::aggregate_image(&eligible));
        all.extend(preds);
    }
    all.sort_by(|a, b| a.crop_id.cmp(&b.crop_id));
    Ok((out, all))
}

pub fn leaf_predictions_csv(preds: &[LeafPrediction]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["crop_id", "suitable", "leaf_color", "leaf_shape", "brown_splotches"])?;
    for p in preds {
        let [c, s, b] = p.morphology.map_or(["", "", ""], |m| m.as_strs());
        let good = p.good.map_or("", |g| if g { "good" } else { "bad" });
        w.write_record([p.crop_id.as_str(), good, c, s, b])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("UTF-8"))
}

/// Fill unread treatments. Without a model one is trained on the read rows;
/// when that is impossible the sheet is returned unchanged.
pub fn predict_treatment_stage(
    sheet: &ResultsSheet,
    model: Option<&EnsembleModel>,
    seed: u64,
) -> Result<(ResultsSheet, Option<EnsembleModel>)> {
    let trained;
    let model = match model {
        Some(m) => m,
        None => match treatment::train(sheet, None, seed) {
            Ok(m) => {
                trained = m;
                &trained
            }
            Err(e @ (Error::InvalidInput(_) | Error::DegenerateTarget(_))) => {
                log::warn!("treatment model not trained: {e}");
                return Ok((sheet.clone(), None));
            }
            Err(e) => return Err(e),
        },
    };
    Ok((treatment::fill_treatments(sheet, model)?, Some(model.clone())))
}

#[derive(Debug, Clone)]
pub struct ExifOutputs {
    pub records: Vec<ExifRecord>,
    pub report: FeasibilityReport,
    pub gps: GpsTable,
}

pub fn exif_stage(images: &[PathBuf]) -> Result<ExifOutputs> {
    let records = images
        .par_iter()
        .map(|p| exif::read_exif(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExifOutputs {
        report: exif::feasibility(&records),
        gps: exif::export_gps(&records),
        records,
    })
}

pub fn write_exif_outputs(out: &ExifOutputs, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join("exif.csv"), &exif::records_to_csv(&out.records)?)?;
    write_text(&dir.join("gps.csv"), &out.gps.to_csv()?)?;
    write_text(&dir.join("report.txt"), &exif::render_report(&out.report, &out.gps))
}

/// Feature/label pairs for the suitability task from a label store.
pub fn suitability_samples(store: &[StoreRecord], crops_dir: &Path) -> Result<Vec<(LeafFeatures, bool)>> {
    store
        .iter()
        .filter(|r| r.task == Task::Suitability)
        .map(|r| match r.labels()? {
            crate::annotate::Labels::Suitability { good } => Ok((crop_features(crops_dir, &r.crop_id)?, good)),
            _ => unreachable!("task checked above"),
        })
        .collect()
}

pub fn morphology_samples(store: &[StoreRecord], crops_dir: &Path) -> Result<Vec<(LeafFeatures, MorphologyLabel)>> {
    store
        .iter()
        .filter(|r| r.task == Task::Morphology)
        .map(|r| match r.labels()? {
            crate::annotate::Labels::Morphology(m) => Ok((crop_features(crops_dir, &r.crop_id)?, m)),
            _ => unreachable!("task checked above"),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OcrEval {
    pub accuracy_with_nulls: f64,
    pub accuracy_without_nulls: f64,
    pub fraction_read: f64,
}

/// Field-level OCR accuracy over treatment, block, row, position and
/// genotype. Both sheets must cover the same filenames.
pub fn eval_ocr(truth: &ResultsSheet, pred: &ResultsSheet) -> Result<OcrEval> {
    let fields = |r: &LabelRecord| -> [Option<String>; 5] {
        [
            r.treatment.map(|t| t.to_string()),
            r.block.map(|v| v.to_string()),
            r.row.map(|v| v.to_string()),
            r.position.map(|v| v.to_string()),
            r.genotype.clone(),
        ]
    };
    let p: BTreeMap<&str, LabelRecord> = pred.rows.iter().map(|r| (r.filename.as_str(), r.label())).collect();
    let t: BTreeMap<&str, LabelRecord> = truth.rows.iter().map(|r| (r.filename.as_str(), r.label())).collect();
    if p.keys().ne(t.keys()) {
        let missing: Vec<&&str> = t.keys().filter(|k| !p.contains_key(*k)).chain(p.keys().filter(|k| !t.contains_key(*k))).collect();
        return Err(Error::InvalidInput(format!("filename sets differ: {missing:?}")));
    }
    let (mut tv, mut pv) = (Vec::new(), Vec::new());
    let mut read = 0usize;
    for (name, tr) in &t {
        let pr = &p[name];
        if pr.any_field() {
            read += 1;
        }
        tv.extend(fields(tr));
        pv.extend(fields(pr));
    }
    Ok(OcrEval {
        accuracy_with_nulls: accuracy_score(&tv, &pv, false)?,
        accuracy_without_nulls: accuracy_score(&tv, &pv, true)?,
        fraction_read: read as f64 / t.len() as f64,
    })
}

/// Artifact locations of a run, relative to its output directory.
pub mod artifacts {
    pub const MANIFEST: &str = "manifest.json";
    pub const LABELS: &str = "labels.csv";
    pub const OCR: &str = "ocr.jsonl";
    pub const CANDIDATES: &str = "candidates.jsonl";
    pub const MASKS: &str = "masks";
    pub const SEGMENTS: &str = "segments.jsonl";
    pub const CROPS: &str = "crops";
    pub const LEAVES: &str = "leaves.csv";
    pub const CLASSIFIED: &str = "classified.csv";
    pub const TREATMENT_MODEL: &str = "treatment_model.json";
    pub const FINAL: &str = "final.csv";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub images: usize,
    pub labels_read: usize,
    pub candidates: usize,
    pub masks: usize,
    pub crops: usize,
    pub classified: bool,
    pub treatments_predicted: usize,
    pub gps_points: usize,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Run every stage in order, writing all artifacts under `cfg.out_dir`.
/// A failing stage aborts the run; earlier artifacts stay on disk.
pub fn run_all(cfg: &PipelineConfig) -> Result<(ResultsSheet, RunSummary)> {
    use artifacts::*;
    let out = &cfg.out_dir;
    create_dir(out)?;
    write_text(&out.join(MANIFEST), &cfg.to_json()?)?;
    let images = stage("read-labels", list_images(&cfg.images))?;

    let (sheet, ocr_results) = stage(
        "read-labels",
        cfg.ocr
            .build()
            .and_then(|src| read_labels_stage(&images, src.as_ref(), &cfg.augment)),
    )?;
    stage("read-labels", sheet.write(&out.join(LABELS)))?;
    stage("read-labels", write_jsonl(&out.join(OCR), &ocr_results))?;
    let labels_read = sheet.rows.iter().filter(|r| r.label().any_field()).count();

    let candidates = stage("locate", locate_stage(&images, &cfg.locator))?;
    stage("locate", write_jsonl(&out.join(CANDIDATES), &candidates))?;

    let masks_dir = out.join(MASKS);
    let segments = stage(
        "segment",
        cfg.predictor
            .build()
            .and_then(|p| segment_stage(&cfg.images, &candidates, p.as_ref(), cfg.seed, &masks_dir)),
    )?;
    stage("segment", write_jsonl(&masks_dir.join(SEGMENTS), &segments))?;

    let crops_dir = out.join(CROPS);
    let crop_ids = stage("crops", crops_stage(&cfg.images, &masks_dir, &crops_dir))?;

    let mut sheet = sheet;
    let mut classified = false;
    match &cfg.morphology_model {
        Some(morph_path) => {
            let (s, preds) = stage(
                "classify",
                (|| {
                    let morph = MultiOutputModel::load(morph_path)?;
                    let suit = cfg.suitability_model.as_deref().map(EnsembleModel::load).transpose()?;
                    classify_stage(&sheet, &crops_dir, suit.as_ref(), &morph)
                })(),
            )?;
            stage("classify", write_text(&out.join(LEAVES), &leaf_predictions_csv(&preds)?))?;
            stage("classify", s.write(&out.join(CLASSIFIED)))?;
            sheet = s;
            classified = true;
        }
        None => log::warn!("no morphology model; morphology cells stay empty"),
    }

    let (sheet, model) = stage(
        "predict-treatment",
        cfg.treatment_model
            .as_deref()
            .map(EnsembleModel::load)
            .transpose()
            .and_then(|m| predict_treatment_stage(&sheet, m.as_ref(), cfg.seed)),
    )?;
    if let (Some(m), None) = (&model, &cfg.treatment_model) {
        stage("predict-treatment", m.save(&out.join(TREATMENT_MODEL)))?;
    }
    stage("predict-treatment", sheet.write(&out.join(FINAL)))?;

    let exif_out = stage("exif", exif_stage(&images))?;
    stage("exif", write_exif_outputs(&exif_out, out))?;

    let summary = RunSummary {
        images: images.len(),
        labels_read,
        candidates: candidates.iter().map(|c| c.candidates.len()).sum(),
        masks: segments.iter().map(|s| s.leaf_ids.len()).sum(),
        crops: crop_ids.len(),
        classified,
        treatments_predicted: sheet
            .rows
            .iter()
            .filter(|r| r.treatment_source == Some(crate::sheet::TreatmentSource::Predicted))
            .count(),
        gps_points: exif_out.gps.rows.len(),
    };
    Ok((sheet, summary))
}
