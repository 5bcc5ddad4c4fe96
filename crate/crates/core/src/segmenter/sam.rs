//! Point-prompted segmentation through an ONNX image encoder and prompt
//! decoder pair.
//!
//! Encoder: `[1, 3, 1024, 1024]` float RGB, longest side resized to 1024,
//! normalized per channel with the ImageNet pixel mean and std, zero padded
//! bottom and right; output `[1, C, 64, 64]` image embedding.
//!
//! Decoder inputs, in order: `image_embeddings`, `point_coords [1, 2, 2]`
//! (the prompt in resized-image coordinates plus a padding point),
//! `point_labels [1, 2]` (`1`, `-1`), `mask_input [1, 1, 256, 256]` zeros,
//! `has_mask_input [1]` zero, `orig_im_size [2]` as `(h, w)`. Outputs: mask
//! logits `[1, M, H, W]` at original size and `iou_predictions [1, M]`. The
//! mask with the highest predicted IoU is thresholded at 0.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use image::imageops::{self, FilterType};
use image::{GrayImage, Luma, RgbImage};
use tract_onnx::prelude::Tensor;

use super::MaskPredictor;
use crate::error::{Error, Result};
use crate::onnx_net::{tensor_f32, view_f32, OnnxNet};
use crate::raster::{self, ON};

const MEAN: [f32; 3] = [123.675, 116.28, 103.53];
const STD: [f32; 3] = [58.395, 57.12, 57.375];

#[derive(Debug, Clone)]
pub struct SamConfig {
    pub encoder: PathBuf,
    pub decoder: PathBuf,
    pub input_size: u32,
}

impl SamConfig {
    pub fn new(encoder: impl Into<PathBuf>, decoder: impl Into<PathBuf>) -> Self {
        SamConfig {
            encoder: encoder.into(),
            decoder: decoder.into(),
            input_size: 1024,
        }
    }
}

pub struct SamPredictor {
    cfg: SamConfig,
    encoder: OnnxNet,
    decoder: OnnxNet,
    /// Embedding per image content hash; repeated prompts on one image reuse it.
    embeddings: Mutex<HashMap<u64, Arc<Tensor>>>,
}

impl std::fmt::Debug for SamPredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SamPredictor").field("cfg", &self.cfg).finish()
    }
}

impl SamPredictor {
    pub fn load(cfg: SamConfig) -> Result<Self> {
        Ok(SamPredictor {
            encoder: OnnxNet::load(&cfg.encoder)?,
            decoder: OnnxNet::load(&cfg.decoder)?,
            cfg,
            embeddings: Mutex::new(HashMap::new()),
        })
    }

    fn scale(&self, image: &RgbImage) -> f64 {
        f64::from(self.cfg.input_size) / f64::from(image.width().max(image.height()))
    }

    fn embedding(&self, image: &RgbImage) -> Result<Arc<Tensor>> {
        let mut key_bytes = image.as_raw().clone();
        key_bytes.extend(image.width().to_le_bytes());
        key_bytes.extend(image.height().to_le_bytes());
        let key = raster::fnv1a(&key_bytes);
        if let Some(e) = self.embeddings.lock().expect("cache poisoned").get(&key) {
            return Ok(e.clone());
        }
        let side = self.cfg.input_size;
        let scale = self.scale(image);
        let rw = ((f64::from(image.width()) * scale).round() as u32).clamp(1, side);
        let rh = ((f64::from(image.height()) * scale).round() as u32).clamp(1, side);
        let resized = imageops::resize(image, rw, rh, FilterType::Triangle);
        let plane = (side * side) as usize;
        let mut data = vec![0f32; 3 * plane];
        for (x, y, p) in resized.enumerate_pixels() {
            let i = (y * side + x) as usize;
            for c in 0..3 {
                data[c * plane + i] = (f32::from(p.0[c]) - MEAN[c]) / STD[c];
            }
        }
        let input = tensor_f32(&[1, 3, side as usize, side as usize], data)?;
        let out = self.encoder.run(vec![input])?;
        let emb = Arc::new(
            out.into_iter()
                .next()
                .ok_or_else(|| Error::Model("encoder produced no output".into()))?,
        );
        let mut cache = self.embeddings.lock().expect("cache poisoned");
        if cache.len() >= 8 {
            cache.clear();
        }
        cache.insert(key, emb.clone());
        Ok(emb)
    }
}

impl MaskPredictor for SamPredictor {
    fn predict(&self, image: &RgbImage, point: (f64, f64)) -> Result<(GrayImage, f64)> {
        let (w, h) = image.dimensions();
        if !(point.0 >= 0.0 && point.1 >= 0.0 && point.0 < f64::from(w) && point.1 < f64::from(h)) {
            return Ok((GrayImage::new(w, h), 0.0));
        }
        let emb = self.embedding(image)?;
        let scale = self.scale(image) as f32;
        let inputs = vec![
            (*emb).clone(),
            tensor_f32(&[1, 2, 2], vec![point.0 as f32 * scale, point.1 as f32 * scale, 0.0, 0.0])?,
            tensor_f32(&[1, 2], vec![1.0, -1.0])?,
            tensor_f32(&[1, 1, 256, 256], vec![0.0; 256 * 256])?,
            tensor_f32(&[1], vec![0.0])?,
            tensor_f32(&[2], vec![h as f32, w as f32])?,
        ];
        // The original size fixes the mask output shape.
        let out = self.decoder.run_with_consts(inputs, &[5])?;
        let [masks, ious, ..] = out.as_slice() else {
            return Err(Error::Model("decoder must return masks and IoU predictions".into()));
        };
        let [1, m, mh, mw] = *masks.shape() else {
            return Err(Error::Model(format!("unexpected mask shape {:?}", masks.shape())));
        };
        if (mh, mw) != (h as usize, w as usize) || m == 0 {
            return Err(Error::Model(format!("mask is {mw}x{mh}, image is {w}x{h}")));
        }
        let scores = view_f32(ious)?;
        let best = (0..m.min(scores.len()))
            .fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        let logits = &view_f32(masks)?[best * mh * mw..(best + 1) * mh * mw];
        let mask = GrayImage::from_fn(w, h, |x, y| {
            Luma([if logits[(y * w + x) as usize] > 0.0 { ON } else { 0 }])
        });
        let score = f64::from(scores.get(best).copied().unwrap_or(0.0)).clamp(0.0, 1.0);
        Ok((mask, score))
    }
}
