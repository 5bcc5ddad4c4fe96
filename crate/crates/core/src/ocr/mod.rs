//! Label reading: a pluggable OCR backend driven through a four-step
//! augmentation ladder.
//!
//! Each image is tried as-is, rotated 45 degrees, adaptively thresholded, and
//! finally thresholded then rotated. The ladder stops at the first stage whose
//! text yields at least one label field.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_parser::{LabelParser, LabelRecord};
use crate::raster;

#[cfg(feature = "onnx")]
mod onnx;
mod stub;

#[cfg(feature = "onnx")]
pub use onnx::{OnnxOcrBackend, OnnxOcrConfig};
pub use stub::{StubBackend, StubSource};

/// One rung of the augmentation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcrStage {
    Original,
    Rotated45,
    Thresholded,
    RotatedAndThresholded,
}

impl OcrStage {
    pub const LADDER: [OcrStage; 4] = [
        OcrStage::Original,
        OcrStage::Rotated45,
        OcrStage::Thresholded,
        OcrStage::RotatedAndThresholded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OcrStage::Original => "original",
            OcrStage::Rotated45 => "rotated45",
            OcrStage::Thresholded => "thresholded",
            OcrStage::RotatedAndThresholded => "rotated_and_thresholded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextFragment {
    pub text: String,
    /// In `[0, 1]`.
    pub confidence: f32,
}

impl TextFragment {
    pub fn new(text: impl Into<String>, confidence: f32) -> Self {
        TextFragment {
            text: text.into(),
            confidence,
        }
    }
}

/// A text recognizer. Implementations must return the same fragments for the
/// same image and must be safe to call from several threads.
pub trait OcrBackend: Send + Sync {
    fn recognize(&self, image: &RgbImage) -> Result<Vec<TextFragment>>;
}

/// Hands out a backend for each image. Shared backends return clones of one
/// `Arc`; scripted backends build a fresh instance per file.
pub trait OcrSource: Send + Sync {
    fn backend_for(&self, filename: &str) -> Result<Arc<dyn OcrBackend>>;
}

impl<B: OcrBackend + 'static> OcrSource for Arc<B> {
    fn backend_for(&self, _filename: &str) -> Result<Arc<dyn OcrBackend>> {
        Ok(self.clone() as Arc<dyn OcrBackend>)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Side of the local-mean window, odd.
    pub threshold_block: u32,
    /// Subtracted from the local mean before comparison.
    pub threshold_offset: i32,
    /// Counterclockwise rotation for the rotated stages.
    pub rotation_deg: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            threshold_block: 31,
            threshold_offset: 10,
            rotation_deg: 45.0,
        }
    }
}

/// Produce the raster tried at `stage`.
pub fn augment(image: &RgbImage, stage: OcrStage, cfg: &AugmentConfig) -> RgbImage {
    let threshold = |img: &RgbImage| {
        raster::gray_to_rgb(&raster::adaptive_threshold_mean(
            &raster::to_gray(img),
            cfg.threshold_block,
            cfg.threshold_offset,
        ))
    };
    match stage {
        OcrStage::Original => image.clone(),
        OcrStage::Rotated45 => raster::rotate_rgb(image, cfg.rotation_deg),
        OcrStage::Thresholded => threshold(image),
        OcrStage::RotatedAndThresholded => raster::rotate_rgb(&threshold(image), cfg.rotation_deg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrAttempt {
    pub stage: OcrStage,
    pub fragments: Vec<String>,
    pub succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrResult {
    pub filename: String,
    /// Concatenated fragments of the successful stage; empty when every
    /// stage failed.
    pub raw_text: String,
    pub stage_used: Option<OcrStage>,
    pub attempts: Vec<OcrAttempt>,
    /// Per-image failure (unreadable file, backend error).
    pub error: Option<String>,
}

impl OcrResult {
    fn failed(filename: &str, attempts: Vec<OcrAttempt>, error: Option<String>) -> Self {
        OcrResult {
            filename: filename.to_owned(),
            raw_text: String::new(),
            stage_used: None,
            attempts,
            error,
        }
    }
}

/// Run the ladder on one image. Backend errors end the ladder and are
/// reported in [`OcrResult::error`] alongside an all-null record.
pub fn read_label(
    filename: &str,
    image: &RgbImage,
    backend: &dyn OcrBackend,
    parser: &LabelParser,
    cfg: &AugmentConfig,
) -> (OcrResult, LabelRecord) {
    let mut attempts = Vec::with_capacity(OcrStage::LADDER.len());
    for stage in OcrStage::LADDER {
        let view = augment(image, stage, cfg);
        let fragments = match backend.recognize(&view) {
            Ok(f) => f,
            Err(e) => {
                let msg = format!("{} stage: {e}", stage.as_str());
                log::warn!("ocr failed on {filename}: {msg}");
                return (
                    OcrResult::failed(filename, attempts, Some(msg)),
                    LabelRecord::empty(filename),
                );
            }
        };
        let texts: Vec<String> = fragments.into_iter().map(|f| f.text).collect();
        let raw_text = texts.join(" ");
        let record = parser.parse_fields(&raw_text).with_filename(filename);
        let succeeded = record.any_field();
        attempts.push(OcrAttempt {
            stage,
            fragments: texts,
            succeeded,
        });
        if succeeded {
            let result = OcrResult {
                filename: filename.to_owned(),
                raw_text,
                stage_used: Some(stage),
                attempts,
                error: None,
            };
            return (result, record);
        }
    }
    (
        OcrResult::failed(filename, attempts, None),
        LabelRecord::empty(filename),
    )
}

/// File name component used as the sheet key.
pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_rgb8())
}

/// Read the labels of a batch in parallel. Failures are confined to their
/// own image; output order follows `paths`.
pub fn read_labels(
    paths: &[PathBuf],
    source: &dyn OcrSource,
    parser: &LabelParser,
    cfg: &AugmentConfig,
) -> Vec<(OcrResult, LabelRecord)> {
    paths
        .par_iter()
        .map(|path| {
            let name = file_name(path);
            let prepared = load_rgb(path).and_then(|img| Ok((img, source.backend_for(&name)?)));
            match prepared {
                Ok((img, backend)) => read_label(&name, &img, backend.as_ref(), parser, cfg),
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    (
                        OcrResult::failed(&name, Vec::new(), Some(e.to_string())),
                        LabelRecord::empty(&name),
                    )
                }
            }
        })
        .collect()
}
