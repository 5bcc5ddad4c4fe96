//! Decode EXIF from a directory of photos, export GPS points and report
//! whether leaf sizes can be estimated.
//!
//! `cargo run --example exif_report [IMAGES_DIR]`

use std::path::PathBuf;

use phenopipe::exif::{estimate_leaf_size, export_gps, feasibility, read_exif, render_report};
use phenopipe::pipeline::list_images;

fn main() -> phenopipe::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e/images"));
    let records = list_images(&dir)?
        .iter()
        .map(|p| read_exif(p))
        .collect::<phenopipe::Result<Vec<_>>>()?;
    for r in &records {
        // A 100 px leaf, for scale.
        let size = estimate_leaf_size(r, (100.0, 100.0))?;
        println!(
            "{:<14} gps {:?}, 100 px = {}",
            r.filename,
            r.latitude_deg.zip(r.longitude_deg),
            size.map_or("unknown".into(), |(w, _)| format!("{w:.2} cm"))
        );
    }
    let gps = export_gps(&records);
    print!("\n{}\n{}", render_report(&feasibility(&records), &gps), gps.to_csv()?);
    Ok(())
}
