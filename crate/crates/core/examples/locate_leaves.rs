//! Find leaf candidates in a synthetic field photo and save an overlay.
//!
//! `cargo run --example locate_leaves [SEED]`

use phenopipe::leaf_locator::{draw_candidates, find_candidates, LocatorConfig};
use phenopipe::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let scene = synth::scene(seed);
    let cands = find_candidates(&scene.image, &LocatorConfig::default());
    println!("{} leaves planted, {} candidates", scene.leaves.len(), cands.len());
    for c in &cands {
        let hit = scene.leaves.iter().any(|l| l.spec.contains(c.midpoint.0, c.midpoint.1));
        println!(
            "bbox {:?} midpoint ({:.1}, {:.1}) green {:.0} {}",
            c.bbox,
            c.midpoint.0,
            c.midpoint.1,
            c.mean_green,
            if hit { "on a leaf" } else { "off target" }
        );
    }
    let out = std::env::temp_dir().join(format!("locate_{seed}.png"));
    draw_candidates(&scene.image, &cands).save(&out)?;
    println!("overlay -> {}", out.display());
    Ok(())
}
