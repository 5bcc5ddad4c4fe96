//! Batch phenotyping of tagged poplar field photos.

pub mod annotate;
pub mod crops;
pub mod error;
pub mod exif;
pub mod geometry;
pub mod label_parser;
pub mod labels;
pub mod leaf_locator;
pub mod ml;
pub mod morphology;
pub mod ocr;
#[cfg(feature = "onnx")]
mod onnx_net;
pub mod pipeline;
pub mod raster;
pub mod segmenter;
pub mod synth;
pub mod sheet;
pub mod treatment;

pub use error::{Error, Result};
