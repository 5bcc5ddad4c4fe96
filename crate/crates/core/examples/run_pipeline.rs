//! Run every stage on the committed five-photo fixture set: label reading,
//! leaf location, segmentation, crops, classification, treatment filling and
//! EXIF analysis.
//!
//! `cargo run --example run_pipeline [OUT_DIR]`

use std::path::PathBuf;

use phenopipe::pipeline::{run_all, PipelineConfig};

fn main() -> phenopipe::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e");
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("phenopipe_run"), PathBuf::from);
    let mut cfg = PipelineConfig::new(fixtures.join("images"), &out);
    cfg.seed = 11;
    cfg.suitability_model = Some(fixtures.join("models/suitability.json"));
    cfg.morphology_model = Some(fixtures.join("models/morphology.json"));
    let (sheet, summary) = run_all(&cfg)?;
    println!("{summary:#?}");
    print!("{}", sheet.to_csv()?);
    println!("artifacts in {}", out.display());
    Ok(())
}
