//! Predict a mask at every candidate midpoint and merge them into one
//! composite raster with a distinct gray value per leaf.
//!
//! `cargo run --example segment_leaves [SEED]`

use phenopipe::leaf_locator::{find_candidates, LocatorConfig};
use phenopipe::segmenter::{region_grow_predictor, segment_image, DEFAULT_TOLERANCE};
use phenopipe::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let scene = synth::scene(seed);
    let cands = find_candidates(&scene.image, &LocatorConfig::default());
    let predictor = region_grow_predictor(DEFAULT_TOLERANCE)?;
    let seg = segment_image(&scene.image, &cands, &predictor, seed)?;
    for (&gray, &cand) in &seg.composite.leaf_ids {
        let px = seg.composite.raster.pixels().filter(|p| p.0[0] == gray).count();
        println!("leaf {gray:>3} from candidate {cand}: {px} px");
    }
    for f in &seg.failures {
        println!("candidate {} failed: {}", f.candidate, f.message);
    }
    let out = std::env::temp_dir().join(format!("composite_{seed}.png"));
    seg.composite.raster.save(&out)?;
    println!("composite -> {}", out.display());
    Ok(())
}
