//! Tabular classification: CART trees, bagged forests, gradient-boosted
//! ensembles, encoders and evaluation metrics.

mod encode;
mod metrics;
mod tree;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use encode::{one_hot, LabelEncoder};
pub use metrics::{accuracy_score, confusion_matrix, matrix_accuracy, render_confusion};
pub use tree::{Node, Tree};

use crate::error::{Error, Result};
use tree::{grow, Gini, GrowParams, Residual};

pub const MODEL_FORMAT: &str = "phenopipe-model-v1";

/// Feature matrix with one or more categorical targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    /// `targets[i][t]` is the class index of row `i` for target `t`.
    pub targets: Vec<Vec<usize>>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub encoders: Vec<LabelEncoder>,
}

impl Dataset {
    /// Single target given as class indices `0..n_classes`.
    pub fn from_indices(features: Vec<Vec<f64>>, target: Vec<usize>, n_classes: usize) -> Result<Self> {
        let f = features.first().map_or(0, Vec::len);
        let ds = Dataset {
            feature_names: (0..f).map(|i| format!("f{i}")).collect(),
            target_names: vec!["target".into()],
            encoders: vec![LabelEncoder::indices(n_classes)],
            targets: target.into_iter().map(|t| vec![t]).collect(),
            features,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Targets given as class names; one encoder is fitted per target.
    pub fn from_labels(
        features: Vec<Vec<f64>>,
        labels: &[Vec<String>],
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        let n_targets = target_names.len();
        let encoders: Vec<LabelEncoder> = (0..n_targets)
            .map(|t| LabelEncoder::fit(labels.iter().map(|row| row[t].as_str())))
            .collect();
        let targets = labels
            .iter()
            .map(|row| {
                if row.len() != n_targets {
                    return Err(Error::InvalidInput(format!("expected {n_targets} labels per row")));
                }
                row.iter().zip(&encoders).map(|(v, e)| e.encode(v)).collect()
            })
            .collect::<Result<_>>()?;
        let ds = Dataset {
            features,
            targets,
            feature_names,
            target_names,
            encoders,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.features.len() {
            return Err(Error::InvalidInput("features and targets differ in length".into()));
        }
        if self.encoders.len() != self.target_names.len() {
            return Err(Error::InvalidInput("one encoder per target required".into()));
        }
        for (i, (x, y)) in self.features.iter().zip(&self.targets).enumerate() {
            if x.len() != self.feature_names.len() {
                return Err(Error::InvalidInput(format!("row {i} has {} features", x.len())));
            }
            if let Some(v) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has non-finite feature {v}")));
            }
            if y.len() != self.encoders.len() {
                return Err(Error::InvalidInput(format!("row {i} has {} targets", y.len())));
            }
            for (t, (&c, e)) in y.iter().zip(&self.encoders).enumerate() {
                if c >= e.len() {
                    return Err(Error::InvalidInput(format!("row {i} target {t}: class {c} out of range")));
                }
            }
        }
        Ok(())
    }

    /// Class indices of target `t`.
    pub fn target(&self, t: usize) -> Vec<usize> {
        self.targets.iter().map(|row| row[t]).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            targets: rows.iter().map(|&i| self.targets[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            encoders: self.encoders.clone(),
        }
    }
}

/// Seeded shuffle of `0..n`; the first `round(test_fraction * n)` indices
/// are the test rows. Returns `(train, test)`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least two rows to split".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} of {n} rows leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = idx.split_off(n_test);
    Ok((train, idx))
}

/// [`split_indices`] applied to a dataset; returns `(train, test)`.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.len(), test_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Bagged,
    Boosted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaggedParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `floor(sqrt(F))`.
    pub max_features: Option<usize>,
}

impl Default for BaggedParams {
    fn default() -> Self {
        BaggedParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostedParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_split: usize,
}

impl Default for BoostedParams {
    fn default() -> Self {
        BoostedParams {
            n_rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperParams {
    Bagged(BaggedParams),
    Boosted(BoostedParams),
}

impl HyperParams {
    pub fn kind(&self) -> Kind {
        match self {
            HyperParams::Bagged(_) => Kind::Bagged,
            HyperParams::Boosted(_) => Kind::Boosted,
        }
    }

    pub fn default_for(kind: Kind) -> Self {
        match kind {
            Kind::Bagged => HyperParams::Bagged(BaggedParams::default()),
            Kind::Boosted => HyperParams::Boosted(BoostedParams::default()),
        }
    }
}

/// A fitted single-target ensemble.
///
/// Bagged: each tree's leaf holds class proportions; prediction is the
/// majority of per-tree argmax votes. Boosted: leaves hold additive score
/// vectors; prediction is the argmax of `base_score` plus all leaves. Ties
/// resolve to the lowest class index in both cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format: String,
    pub kind: Kind,
    pub hyperparams: HyperParams,
    pub encoder: LabelEncoder,
    pub n_classes: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub base_score: Vec<f64>,
    pub trees: Vec<Tree>,
}

fn argmax_low(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

/// Fit target `target` of `data`.
pub fn fit(data: &Dataset, target: usize, params: &HyperParams, seed: u64) -> Result<EnsembleModel> {
    data.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot fit an empty dataset".into()));
    }
    let name = data.target_names.get(target).cloned().unwrap_or_default();
    let encoder = data
        .encoders
        .get(target)
        .ok_or_else(|| Error::InvalidInput(format!("no target {target}")))?
        .clone();
    let y = data.target(target);
    let k = encoder.len();
    let mut present = vec![false; k];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::DegenerateTarget(name));
    }
    let x = &data.features;
    let n_features = data.n_features();
    let (trees, base_score) = match params {
        HyperParams::Bagged(p) => (fit_bagged(x, &y, k, n_features, p, seed), vec![0.0; k]),
        HyperParams::Boosted(p) => fit_boosted(x, &y, k, n_features, p, seed),
    };
    Ok(EnsembleModel {
        format: MODEL_FORMAT.into(),
        kind: params.kind(),
        hyperparams: params.clone(),
        encoder,
        n_classes: k,
        n_features,
        feature_names: data.feature_names.clone(),
        seed,
        base_score,
        trees,
    })
}

fn fit_bagged(x: &[Vec<f64>], y: &[usize], k: usize, n_features: usize, p: &BaggedParams, seed: u64) -> Vec<Tree> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..p.n_trees.max(1)).map(|_| master.gen()).collect();
    let max_features = p
        .max_features
        .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
        .clamp(1, n_features.max(1));
    let grow_params = GrowParams {
        max_depth: p.max_depth,
        min_samples_split: p.min_samples_split,
        max_features,
    };
    let crit = Gini { y, n_classes: k };
    let n = x.len();
    seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow(x, sample, &crit, &grow_params, &mut rng)
        })
        .collect()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn fit_boosted(
    x: &[Vec<f64>],
    y: &[usize],
    k: usize,
    n_features: usize,
    p: &BoostedParams,
    seed: u64,
) -> (Vec<Tree>, Vec<f64>) {
    let n = x.len();
    let mut counts = vec![0usize; k];
    y.iter().for_each(|&c| counts[c] += 1);
    // Log class priors, floored so absent classes stay finite.
    let base: Vec<f64> = counts
        .iter()
        .map(|&c| ((c as f64).max(1e-3) / n as f64).ln())
        .collect();
    let mut scores: Vec<Vec<f64>> = vec![base.clone(); n];
    let grow_params = GrowParams {
        max_depth: Some(p.max_depth),
        min_samples_split: p.min_samples_split,
        max_features: n_features.max(1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(p.n_rounds * k);
    let all: Vec<usize> = (0..n).collect();
    for _ in 0..p.n_rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut round = Vec::with_capacity(k);
        for class in 0..k {
            let r: Vec<f64> = probs
                .iter()
                .zip(y)
                .map(|(p, &yi)| f64::from(u8::from(yi == class)) - p[class])
                .collect();
            let crit = Residual {
                r: &r,
                n_classes: k,
                class,
            };
            let mut tree = grow(x, all.clone(), &crit, &grow_params, &mut rng);
            for node in &mut tree.nodes {
                if let Node::Leaf { value } = node {
                    value.iter_mut().for_each(|v| *v *= p.learning_rate);
                }
            }
            round.push(tree);
        }
        for (xi, s) in x.iter().zip(scores.iter_mut()) {
            for t in &round {
                for (sc, v) in s.iter_mut().zip(t.leaf_value(xi)) {
                    *sc += v;
                }
            }
        }
        trees.extend(round);
    }
    (trees, base)
}

impl EnsembleModel {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    /// Bagged: per-class vote share. Boosted: softmax of the summed scores.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(match self.kind {
            Kind::Bagged => {
                let mut votes = vec![0.0; self.n_classes];
                for t in &self.trees {
                    votes[argmax_low(t.leaf_value(x))] += 1.0;
                }
                let n = self.trees.len().max(1) as f64;
                votes.iter().map(|v| v / n).collect()
            }
            Kind::Boosted => softmax(&self.raw_scores(x)),
        })
    }

    fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.base_score.clone();
        for t in &self.trees {
            for (a, v) in s.iter_mut().zip(t.leaf_value(x)) {
                *a += v;
            }
        }
        s
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check(x)?;
        Ok(match self.kind {
            Kind::Bagged => {
                let mut votes = vec![0usize; self.n_classes];
                for t in &self.trees {
                    votes[argmax_low(t.leaf_value(x))] += 1;
                }
                (1..votes.len()).fold(0, |b, i| if votes[i] > votes[b] { i } else { b })
            }
            Kind::Boosted => argmax_low(&self.raw_scores(x)),
        })
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<&str> {
        self.encoder.decode(self.predict(x)?)
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Structural checks applied after loading.
    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Model(format!("unsupported model format `{}`", self.format)));
        }
        if self.encoder.len() != self.n_classes || self.base_score.len() != self.n_classes {
            return Err(Error::Model("class count disagrees with encoder".into()));
        }
        if self.trees.is_empty() {
            return Err(Error::Model("model has no trees".into()));
        }
        for t in &self.trees {
            if t.max_feature().is_some_and(|f| f >= self.n_features) {
                return Err(Error::Model("tree references a feature out of range".into()));
            }
            for (i, n) in t.nodes.iter().enumerate() {
                match n {
                    Node::Leaf { value } if value.len() != self.n_classes => {
                        return Err(Error::Model("leaf width disagrees with class count".into()))
                    }
                    Node::Split { left, right, .. }
                        if *left <= i || *right <= i || *left >= t.nodes.len() || *right >= t.nodes.len() =>
                    {
                        return Err(Error::Model("malformed tree links".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: EnsembleModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    pub model: EnsembleModel,
}

/// One ensemble per target, all over the same features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOutputModel {
    pub format: String,
    pub kind: String,
    pub targets: Vec<NamedModel>,
}

impl MultiOutputModel {
    pub fn fit(data: &Dataset, params: &HyperParams, seed: u64) -> Result<Self> {
        let targets = (0..data.target_names.len())
            .map(|t| {
                Ok(NamedModel {
                    name: data.target_names[t].clone(),
                    model: fit(data, t, params, seed.wrapping_add(t as u64))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(MultiOutputModel {
            format: MODEL_FORMAT.into(),
            kind: "multi_output".into(),
            targets,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.targets.iter().map(|t| t.model.predict(x)).collect()
    }

    pub fn predict_labels(&self, x: &[f64]) -> Result<Vec<String>> {
        self.targets
            .iter()
            .map(|t| Ok(t.model.predict_label(x)?.to_owned()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.kind != "multi_output" {
            return Err(Error::Model("not a multi-output model".into()));
        }
        let nf = self.targets.first().map(|t| t.model.n_features);
        for t in &self.targets {
            t.model.validate()?;
            if Some(t.model.n_features) != nf {
                return Err(Error::Model("submodels disagree on feature count".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MultiOutputModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
