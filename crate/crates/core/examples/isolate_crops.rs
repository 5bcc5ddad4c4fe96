//! Rotate every segmented leaf upright, crop it tightly and write it as an
//! RGBA PNG named `<stem>_<leaf id>.png`.
//!
//! `cargo run --example isolate_crops [SEED]`

use phenopipe::crops::save_crop;
use phenopipe::leaf_locator::{find_candidates, LocatorConfig};
use phenopipe::morphology::extract_features;
use phenopipe::segmenter::{isolate_all, region_grow_predictor, segment_image, DEFAULT_TOLERANCE};
use phenopipe::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let scene = synth::scene(seed);
    let cands = find_candidates(&scene.image, &LocatorConfig::default());
    let seg = segment_image(&scene.image, &cands, &region_grow_predictor(DEFAULT_TOLERANCE)?, seed)?;
    let dir = std::env::temp_dir().join("phenopipe_crops");
    std::fs::create_dir_all(&dir)?;
    for leaf in isolate_all(&scene.image, &seg.composite, &format!("scene_{seed}.png"))? {
        let f = extract_features(&leaf.crop, &leaf.mask_crop)?;
        let path = save_crop(&dir, &leaf)?;
        println!(
            "{} rotated {:>6.1} deg, {}x{}, aspect {:.2}, hue {:.0}",
            path.display(),
            leaf.angle,
            leaf.crop.width(),
            leaf.crop.height(),
            f.aspect_ratio,
            f.hue_mean
        );
    }
    Ok(())
}
