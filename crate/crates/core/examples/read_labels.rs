//! Read plot tags: parse typed label text, then run the OCR ladder over the
//! fixture photos with the sidecar stub backend.
//!
//! `cargo run --example read_labels [IMAGES_DIR]`

use std::path::PathBuf;

use phenopipe::label_parser::parse_fields;
use phenopipe::pipeline::{list_images, read_labels_stage, OcrSpec};

fn main() -> phenopipe::Result<()> {
    for text in ["D B1 R8 P32 BESC-34", "C B1 R10 P12 **BESC-417_LM**,core", "B2 R3 smudge BESC-468"] {
        println!("{text:<40} -> {:?}", parse_fields(text));
    }

    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e/images"));
    let source = OcrSpec::Stub { dir: dir.clone() }.build()?;
    let (sheet, log) = read_labels_stage(&list_images(&dir)?, source.as_ref(), &Default::default())?;
    for r in &log {
        let stage = r.stage_used.map_or("unread", |s| s.as_str());
        println!("{:<14} {:<12} {:?}", r.filename, stage, r.raw_text);
    }
    print!("\n{}", sheet.to_csv()?);
    Ok(())
}
