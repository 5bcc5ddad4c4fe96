//! Fill unread treatments from leaf morphology. The demo sheet follows a
//! drought rule: heavy brown splotching means treatment D.
//!
//! `cargo run --example predict_treatment`

use phenopipe::label_parser::Treatment;
use phenopipe::labels::{Category, LeafColor, LeafShape, MorphologyLabel, Splotches};
use phenopipe::sheet::{ResultsSheet, SheetRow, TreatmentSource};
use phenopipe::treatment;

fn main() -> phenopipe::Result<()> {
    let levels = [Splotches::None, Splotches::Low, Splotches::Medium, Splotches::High];
    let rows = (0..40)
        .map(|i| {
            let splotches = levels[i % 4];
            let mut row = SheetRow {
                filename: format!("IMG_{i:03}.JPG"),
                ..Default::default()
            };
            row.set_morphology(Some(MorphologyLabel::new(LeafColor::LightGreen, LeafShape::Ovate, splotches)));
            // Every fifth tag was unreadable.
            if i % 5 != 0 {
                row.treatment = Some(if splotches >= Splotches::Medium { Treatment::D } else { Treatment::C });
                row.treatment_source = Some(TreatmentSource::Ocr);
            }
            row
        })
        .collect();
    let sheet = ResultsSheet::new(rows)?;
    let model = treatment::train(&sheet, None, 0)?;
    let filled = treatment::fill_treatments(&sheet, &model)?;
    for r in filled.rows.iter().filter(|r| r.treatment_source == Some(TreatmentSource::Predicted)) {
        println!("{} splotches {:<6} -> {}", r.filename, r.brown_splotches.map_or("", |s| s.as_str()), r.treatment.map_or("", |t| t.as_str()));
    }
    Ok(())
}
