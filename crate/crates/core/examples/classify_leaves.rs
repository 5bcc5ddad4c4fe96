//! Classify the leaves of one photo and vote an image-level morphology label.
//!
//! `cargo run --example classify_leaves [SEED]`

use phenopipe::labels::MorphologyLabel;
use phenopipe::leaf_locator::{find_candidates, LocatorConfig};
use phenopipe::morphology::{self, aggregate_image, classify_morphology, extract_features};
use phenopipe::segmenter::{isolate_all, region_grow_predictor, segment_image, DEFAULT_TOLERANCE};
use phenopipe::synth;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;

    // Quick model on rendered leaves; see the train_models example.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train: Vec<_> = (0..600)
        .map(|_| {
            let label = synth::random_label(&mut rng);
            let (crop, mask) = synth::render_leaf(label, &mut rng);
            (extract_features(&crop, &mask).expect("leaf has pixels"), label)
        })
        .collect();
    let model = morphology::train_morphology(&train, None, 0)?;

    let scene = synth::scene(seed);
    let cands = find_candidates(&scene.image, &LocatorConfig::default());
    let seg = segment_image(&scene.image, &cands, &region_grow_predictor(DEFAULT_TOLERANCE)?, seed)?;
    let mut labels = Vec::new();
    for leaf in isolate_all(&scene.image, &seg.composite, "scene.png")? {
        let label = classify_morphology(&extract_features(&leaf.crop, &leaf.mask_crop)?, &model)?;
        println!("leaf {:>3}: {}", leaf.leaf_id, label.as_strs().join(" / "));
        labels.push(label);
    }
    let planted: Vec<MorphologyLabel> = scene.leaves.iter().map(|l| l.spec.label).collect();
    println!("image label   {:?}", aggregate_image(&labels).map(|m| m.as_strs()));
    println!("planted modes {:?}", aggregate_image(&planted).map(|m| m.as_strs()));
    Ok(())
}
