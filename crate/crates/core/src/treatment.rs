//! Treatment prediction from image-level morphology: one-hot color and
//! shape, ordinal splotch level, bagged ensemble.

use crate::error::{Error, Result};
use crate::label_parser::Treatment;
use crate::labels::{ordinal_encode, Category, LeafColor, LeafShape, MorphologyLabel};
use crate::ml::{self, Dataset, EnsembleModel, HyperParams, Kind};
use crate::sheet::{ResultsSheet, TreatmentSource};

pub fn feature_names() -> Vec<String> {
    LeafColor::names()
        .into_iter()
        .chain(LeafShape::names())
        .map(str::to_owned)
        .chain(["brown_splotches".to_owned()])
        .collect()
}

/// Nine features: one-hot color (4), one-hot shape (4), splotch level.
pub fn encode(m: &MorphologyLabel) -> Vec<f64> {
    let mut v = vec![0.0; 9];
    v[m.color.index()] = 1.0;
    v[4 + m.shape.index()] = 1.0;
    v[8] = f64::from(ordinal_encode(m.splotches));
    v
}

/// Rows with both a treatment and full morphology.
pub fn build_training_set(sheet: &ResultsSheet) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for r in &sheet.rows {
        if let (Some(t), Some(m)) = (r.treatment, r.morphology()) {
            features.push(encode(&m));
            labels.push(vec![t.as_str().to_owned()]);
        }
    }
    if features.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{} usable rows; treatment training needs at least two",
            features.len()
        )));
    }
    let data = Dataset::from_labels(features, &labels, feature_names(), vec!["treatment".into()])?;
    if data.encoders[0].len() < 2 {
        return Err(Error::DegenerateTarget("treatment".into()));
    }
    Ok(data)
}

pub fn train(sheet: &ResultsSheet, params: Option<HyperParams>, seed: u64) -> Result<EnsembleModel> {
    let data = build_training_set(sheet)?;
    let params = params.unwrap_or_else(|| HyperParams::default_for(Kind::Bagged));
    ml::fit(&data, 0, &params, seed)
}

pub fn predict(model: &EnsembleModel, m: &MorphologyLabel) -> Result<Treatment> {
    let label = model.predict_label(&encode(m))?;
    Treatment::parse(label).ok_or_else(|| Error::Model(format!("treatment model predicted `{label}`")))
}

/// Fill missing treatments of rows that have morphology. Read treatments
/// are kept and marked `ocr`; filled ones are marked `predicted`.
pub fn fill_treatments(sheet: &ResultsSheet, model: &EnsembleModel) -> Result<ResultsSheet> {
    let mut out = sheet.clone();
    for r in &mut out.rows {
        match (r.treatment, r.morphology()) {
            (Some(_), _) => {
                if r.treatment_source.is_none() {
                    r.treatment_source = Some(TreatmentSource::Ocr);
                }
            }
            (None, Some(m)) => {
                r.treatment = Some(predict(model, &m)?);
                r.treatment_source = Some(TreatmentSource::Predicted);
            }
            (None, None) => r.treatment_source = None,
        }
    }
    Ok(out)
}
