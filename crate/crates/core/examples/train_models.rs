//! Train the suitability and morphology classifiers on rendered leaves, report
//! held-out confusion matrices and save both models as JSON.
//!
//! `cargo run --example train_models [OUT_DIR]`

use std::path::PathBuf;

use phenopipe::labels::MorphologyLabel;
use phenopipe::ml::{confusion_matrix, matrix_accuracy, render_confusion};
use phenopipe::morphology::{self, classify_morphology, classify_suitability, extract_features, LeafFeatures};
use phenopipe::synth;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Samples<T> = Vec<(LeafFeatures, T)>;

fn samples(n: usize, seed: u64) -> (Samples<bool>, Samples<MorphologyLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut suit, mut morph) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let label = synth::random_label(&mut rng);
        let (crop, mask) = synth::render_leaf(label, &mut rng);
        let f = extract_features(&crop, &mask).expect("rendered leaf has pixels");
        suit.push((f, true));
        morph.push((f, label));
        let (crop, mask) = synth::render_bad_leaf(&mut rng);
        suit.push((extract_features(&crop, &mask).expect("fragment has pixels"), false));
    }
    (suit, morph)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("phenopipe_models"), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    let (suit_train, morph_train) = samples(400, 1);
    let (suit_test, morph_test) = samples(100, 2);

    let suit = morphology::train_suitability(&suit_train, None, 0)?;
    let hits = suit_test
        .iter()
        .filter(|(f, good)| classify_suitability(f, &suit).is_ok_and(|g| g == *good))
        .count();
    println!("suitability accuracy {:.3}", hits as f64 / suit_test.len() as f64);

    let morph = morphology::train_morphology(&morph_train, None, 0)?;
    let preds: Vec<MorphologyLabel> = morph_test
        .iter()
        .map(|(f, _)| classify_morphology(f, &morph))
        .collect::<phenopipe::Result<_>>()?;
    for (t, target) in morph.targets.iter().enumerate() {
        let enc = &target.model.encoder;
        let idx = |m: &MorphologyLabel| enc.encode(m.as_strs()[t]);
        let truth = morph_test.iter().map(|(_, m)| idx(m)).collect::<phenopipe::Result<Vec<_>>>()?;
        let pred = preds.iter().map(idx).collect::<phenopipe::Result<Vec<_>>>()?;
        let m = confusion_matrix(&truth, &pred, enc.len())?;
        println!("\n{} accuracy {:.3}\n{}", target.name, matrix_accuracy(&m), render_confusion(&m, enc.classes()));
    }
    suit.save(&out.join("suitability.json"))?;
    morph.save(&out.join("morphology.json"))?;
    println!("models -> {}", out.display());
    Ok(())
}
