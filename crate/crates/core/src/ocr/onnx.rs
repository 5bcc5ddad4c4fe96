//! Neural OCR through ONNX text-recognition models.
//!
//! Recognition model contract: input `[1, 3, H, W]` float, BGR channel order,
//! scaled to `[-1, 1]`, `H` fixed (48 by default) and `W` following the aspect
//! ratio; output `[1, T, C]` per-step class probabilities with class 0 the CTC
//! blank and class `i` the `i`-th dictionary line (an extra trailing class
//! decodes as a space).
//!
//! The optional detection model takes `[1, 3, H, W]` (sides multiples of 32,
//! ImageNet-normalized BGR) and returns a `[1, 1, H, W]` text probability map.
//! Without it the whole image is recognized as one line.

use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{GrayImage, Luma, RgbImage};

use super::{OcrBackend, TextFragment};
use crate::error::{Error, Result};
use crate::geometry;
use crate::onnx_net::{tensor_f32, view_f32, OnnxNet};

#[derive(Debug, Clone)]
pub struct OnnxOcrConfig {
    pub rec_model: PathBuf,
    /// Character dictionary, one symbol per line. Defaults to the model path
    /// with a `.txt` extension.
    pub dict: Option<PathBuf>,
    pub det_model: Option<PathBuf>,
    pub rec_height: u32,
    pub max_rec_width: u32,
    pub det_max_side: u32,
    /// Probability above which a detection-map pixel counts as text.
    pub det_threshold: f32,
    /// Minimum mean probability of a kept box.
    pub det_box_threshold: f32,
    pub det_unclip_ratio: f64,
}

impl OnnxOcrConfig {
    pub fn new(rec_model: impl Into<PathBuf>) -> Self {
        OnnxOcrConfig {
            rec_model: rec_model.into(),
            dict: None,
            det_model: None,
            rec_height: 48,
            max_rec_width: 3200,
            det_max_side: 960,
            det_threshold: 0.3,
            det_box_threshold: 0.5,
            det_unclip_ratio: 1.5,
        }
    }
}

pub struct OnnxOcrBackend {
    cfg: OnnxOcrConfig,
    rec: OnnxNet,
    det: Option<OnnxNet>,
    charset: Vec<String>,
}

impl std::fmt::Debug for OnnxOcrBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxOcrBackend")
            .field("cfg", &self.cfg)
            .field("charset_len", &self.charset.len())
            .finish()
    }
}

impl OnnxOcrBackend {
    pub fn load(cfg: OnnxOcrConfig) -> Result<Self> {
        let dict_path = cfg
            .dict
            .clone()
            .unwrap_or_else(|| cfg.rec_model.with_extension("txt"));
        let dict = std::fs::read_to_string(&dict_path).map_err(|e| Error::io(&dict_path, e))?;
        let charset = dict
            .lines()
            .map(|l| l.trim_end_matches('\r').to_owned())
            .collect();
        let rec = OnnxNet::load(&cfg.rec_model)?;
        let det = cfg.det_model.as_deref().map(OnnxNet::load).transpose()?;
        Ok(OnnxOcrBackend {
            cfg,
            rec,
            det,
            charset,
        })
    }

    pub fn from_path(rec_model: &Path) -> Result<Self> {
        Self::load(OnnxOcrConfig::new(rec_model))
    }

    fn recognize_line(&self, line: &RgbImage) -> Result<Option<TextFragment>> {
        let (w, h) = line.dimensions();
        if w == 0 || h == 0 {
            return Ok(None);
        }
        let th = self.cfg.rec_height;
        let tw = ((f64::from(w) * f64::from(th) / f64::from(h)).ceil() as u32)
            .clamp(8, self.cfg.max_rec_width);
        let resized = imageops::resize(line, tw, th, FilterType::Triangle);
        let plane = (tw * th) as usize;
        let mut data = vec![0f32; 3 * plane];
        for (x, y, p) in resized.enumerate_pixels() {
            let i = (y * tw + x) as usize;
            // BGR
            for (c, &v) in [p.0[2], p.0[1], p.0[0]].iter().enumerate() {
                data[c * plane + i] = (f32::from(v) / 255.0 - 0.5) / 0.5;
            }
        }
        let input = tensor_f32(&[1, 3, th as usize, tw as usize], data)?;
        let out = self.rec.run(vec![input])?;
        let probs = out
            .first()
            .ok_or_else(|| Error::Model("recognizer produced no output".into()))?;
        let shape = probs.shape().to_vec();
        let (steps, classes) = match shape.as_slice() {
            [1, t, c] => (*t, *c),
            [t, c] => (*t, *c),
            other => return Err(Error::Model(format!("unexpected recognizer output {other:?}"))),
        };
        let text = ctc_greedy_decode(view_f32(probs)?, steps, classes, &self.charset);
        Ok(text.filter(|f| !f.text.trim().is_empty()))
    }

    /// Text boxes `(x, y, w, h)` in image coordinates, top-to-bottom then
    /// left-to-right.
    fn detect(&self, det: &OnnxNet, image: &RgbImage) -> Result<Vec<(u32, u32, u32, u32)>> {
        let (w, h) = image.dimensions();
        let scale = (f64::from(self.cfg.det_max_side) / f64::from(w.max(h))).min(1.0);
        let round32 = |v: f64| (((v / 32.0).round() as u32).max(1)) * 32;
        let (dw, dh) = (round32(f64::from(w) * scale), round32(f64::from(h) * scale));
        let resized = imageops::resize(image, dw, dh, FilterType::Triangle);
        let plane = (dw * dh) as usize;
        let mut data = vec![0f32; 3 * plane];
        const MEAN: [f32; 3] = [0.485, 0.456, 0.406];
        const STD: [f32; 3] = [0.229, 0.224, 0.225];
        for (x, y, p) in resized.enumerate_pixels() {
            let i = (y * dw + x) as usize;
            for (c, &v) in [p.0[2], p.0[1], p.0[0]].iter().enumerate() {
                data[c * plane + i] = (f32::from(v) / 255.0 - MEAN[c]) / STD[c];
            }
        }
        let out = det.run(vec![tensor_f32(&[1, 3, dh as usize, dw as usize], data)?])?;
        let map = out
            .first()
            .ok_or_else(|| Error::Model("detector produced no output".into()))?;
        let (mh, mw) = match map.shape() {
            [1, 1, mh, mw] => (*mh, *mw),
            other => return Err(Error::Model(format!("unexpected detector output {other:?}"))),
        };
        let probs = view_f32(map)?;
        let binary = GrayImage::from_fn(mw as u32, mh as u32, |x, y| {
            let p = probs[y as usize * mw + x as usize];
            Luma([if p > self.cfg.det_threshold { 255 } else { 0 }])
        });
        let (_, comps) = geometry::components(&binary);
        let sx = f64::from(w) / mw as f64;
        let sy = f64::from(h) / mh as f64;
        let mut boxes = Vec::new();
        for comp in comps {
            if comp.pixels.len() < 4 {
                continue;
            }
            let mean: f32 = comp
                .pixels
                .iter()
                .map(|&(x, y)| probs[y as usize * mw + x as usize])
                .sum::<f32>()
                / comp.pixels.len() as f32;
            if mean < self.cfg.det_box_threshold {
                continue;
            }
            let (bx, by, bw, bh) = comp.bbox;
            let (bw_f, bh_f) = (f64::from(bw), f64::from(bh));
            let grow = bw_f * bh_f * self.cfg.det_unclip_ratio / (2.0 * (bw_f + bh_f));
            let x0 = ((f64::from(bx) - grow) * sx).floor().max(0.0);
            let y0 = ((f64::from(by) - grow) * sy).floor().max(0.0);
            let x1 = ((f64::from(bx) + bw_f + grow) * sx).ceil().min(f64::from(w));
            let y1 = ((f64::from(by) + bh_f + grow) * sy).ceil().min(f64::from(h));
            if x1 > x0 && y1 > y0 {
                boxes.push((x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32));
            }
        }
        boxes.sort_by_key(|&(x, y, _, _)| (y, x));
        Ok(boxes)
    }
}

impl OcrBackend for OnnxOcrBackend {
    fn recognize(&self, image: &RgbImage) -> Result<Vec<TextFragment>> {
        let Some(det) = &self.det else {
            return Ok(self.recognize_line(image)?.into_iter().collect());
        };
        let mut out = Vec::new();
        for (x, y, w, h) in self.detect(det, image)? {
            let crop = imageops::crop_imm(image, x, y, w, h).to_image();
            out.extend(self.recognize_line(&crop)?);
        }
        Ok(out)
    }
}

/// Greedy CTC decoding: per-step argmax, merge repeats, drop blanks (class 0).
pub(crate) fn ctc_greedy_decode(
    probs: &[f32],
    steps: usize,
    classes: usize,
    charset: &[String],
) -> Option<TextFragment> {
    let mut text = String::new();
    let mut confs = Vec::new();
    let mut prev = 0usize;
    for t in 0..steps {
        let row = &probs[t * classes..(t + 1) * classes];
        let (best, p) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, f32::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if best != 0 && best != prev {
            match charset.get(best - 1) {
                Some(sym) => text.push_str(sym),
                None if best - 1 == charset.len() => text.push(' '),
                None => {}
            }
            confs.push(p);
        }
        prev = best;
    }
    if confs.is_empty() {
        return None;
    }
    let confidence = (confs.iter().sum::<f32>() / confs.len() as f32).clamp(0.0, 1.0);
    Some(TextFragment::new(text, confidence))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ctc_merges_repeats_and_blanks() {
        let charset: Vec<String> = ["A", "B"].iter().map(|s| s.to_string()).collect();
        // steps: A A blank A B space
        let rows = [[0.1, 0.8, 0.1, 0.0], [0.1, 0.9, 0.0, 0.0], [0.9, 0.1, 0.0, 0.0], [0.0, 0.7, 0.3, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let flat: Vec<f32> = rows.iter().flatten().copied().collect();
        let frag = ctc_greedy_decode(&flat, 6, 4, &charset).unwrap();
        assert_eq!(frag.text, "AAB ");
        assert!(frag.confidence > 0.8 && frag.confidence <= 1.0);
        assert!(ctc_greedy_decode(&[1.0, 0.0, 0.0, 0.0], 1, 4, &charset).is_none());
    }
}
