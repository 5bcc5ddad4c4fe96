//! Leaf crop files: RGBA PNGs named `<stem>_<leaf_id>.png` whose alpha
//! channel is the leaf mask.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage, Rgba, RgbaImage};

use crate::error::{Error, Result};
use crate::raster::ON;
use crate::segmenter::IsolatedLeaf;

/// Crop identifier `<stem>_<leaf_id>`.
pub fn crop_id(filename: &str, leaf_id: u8) -> String {
    let stem = Path::new(filename)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{stem}_{leaf_id}")
}

/// Split a crop id at its last underscore into `(stem, leaf_id)`.
pub fn split_crop_id(id: &str) -> Option<(&str, u8)> {
    let (stem, leaf) = id.rsplit_once('_')?;
    Some((stem, leaf.parse().ok()?))
}

pub fn crop_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.png"))
}

pub fn to_rgba(crop: &RgbImage, mask: &GrayImage) -> RgbaImage {
    RgbaImage::from_fn(crop.width(), crop.height(), |x, y| {
        let Rgb([r, g, b]) = *crop.get_pixel(x, y);
        Rgba([r, g, b, if mask.get_pixel(x, y).0[0] > 0 { ON } else { 0 }])
    })
}

/// Split an RGBA crop into its RGB pixels (non-leaf blacked out) and mask.
pub fn from_rgba(img: &RgbaImage) -> (RgbImage, GrayImage) {
    let mask = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        Luma([if img.get_pixel(x, y).0[3] >= 128 { ON } else { 0 }])
    });
    let crop = RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let Rgba([r, g, b, _]) = *img.get_pixel(x, y);
        if mask.get_pixel(x, y).0[0] > 0 { Rgb([r, g, b]) } else { Rgb([0, 0, 0]) }
    });
    (crop, mask)
}

pub fn save_crop(dir: &Path, leaf: &IsolatedLeaf) -> Result<PathBuf> {
    let path = crop_path(dir, &crop_id(&leaf.filename, leaf.leaf_id));
    to_rgba(&leaf.crop, &leaf.mask_crop)
        .save(&path)
        .map_err(|e| Error::image(&path, e))?;
    Ok(path)
}

pub fn load_crop(path: &Path) -> Result<(RgbImage, GrayImage)> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_rgba8();
    Ok(from_rgba(&img))
}

/// Crop ids present in `dir`, sorted.
pub fn list_crops(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if split_crop_id(stem).is_some() {
                    ids.push(stem.to_owned());
                }
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Crop ids grouped by source image stem, leaf ids ascending.
pub fn group_by_image(ids: &[String]) -> BTreeMap<String, Vec<String>> {
    let mut groups: BTreeMap<String, Vec<(u8, String)>> = BTreeMap::new();
    for id in ids {
        if let Some((stem, leaf)) = split_crop_id(id) {
            groups.entry(stem.to_owned()).or_default().push((leaf, id.clone()));
        }
    }
    groups
        .into_iter()
        .map(|(stem, mut v)| {
            v.sort();
            (stem, v.into_iter().map(|(_, id)| id).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_split_on_last_underscore() {
        assert_eq!(crop_id("plot_7_a.jpg", 42), "plot_7_a_42");
        assert_eq!(split_crop_id("plot_7_a_42"), Some(("plot_7_a", 42)));
        assert_eq!(split_crop_id("noid"), None);
        assert_eq!(split_crop_id("x_300"), None);
    }

    #[test]
    fn rgba_round_trip() {
        let crop = RgbImage::from_fn(4, 3, |x, y| if x == y { Rgb([10, 200, 30]) } else { Rgb([0, 0, 0]) });
        let mask = GrayImage::from_fn(4, 3, |x, y| Luma([if x == y { ON } else { 0 }]));
        let (c, m) = from_rgba(&to_rgba(&crop, &mask));
        assert_eq!((c, m), (crop, mask));
    }

    #[test]
    fn grouping() {
        let ids: Vec<String> = ["b_3", "a_10", "a_2", "junk"].iter().map(|s| s.to_string()).collect();
        let g = group_by_image(&ids);
        assert_eq!(g["a"], vec!["a_2", "a_10"]);
        assert_eq!(g["b"], vec!["b_3"]);
        assert_eq!(g.len(), 2);
    }
}
