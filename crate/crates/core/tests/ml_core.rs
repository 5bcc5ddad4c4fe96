use phenopipe::ml::{
    self, accuracy_score, confusion_matrix, fit, matrix_accuracy, one_hot, BaggedParams, BoostedParams, Dataset,
    EnsembleModel, HyperParams, Kind, MultiOutputModel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two Gaussian-ish blobs in 4-D, centers 4 units apart.
fn separable(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let center = if class == 0 { -2.0 } else { 2.0 };
        x.push((0..4).map(|_| center + rng.gen_range(-1.5..1.5)).collect());
        y.push(class);
    }
    Dataset::from_indices(x, y, 2).unwrap()
}

fn xor() -> Dataset {
    let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    Dataset::from_indices(x, vec![0, 1, 1, 0], 2).unwrap()
}

fn score(model: &EnsembleModel, data: &Dataset) -> f64 {
    let pred = model.predict_many(&data.features).unwrap();
    let truth = data.target(0);
    pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[test]
fn bagged_separates_blobs() {
    let data = separable(400, 3);
    let (train, test) = ml::train_test_split(&data, 0.25, 5).unwrap();
    let model = fit(&train, 0, &HyperParams::default_for(Kind::Bagged), 8).unwrap();
    let acc = score(&model, &test);
    assert!(acc >= 0.95, "{acc}");
}

#[test]
fn boosted_separates_blobs() {
    let data = separable(400, 4);
    let (train, test) = ml::train_test_split(&data, 0.25, 5).unwrap();
    let model = fit(&train, 0, &HyperParams::default_for(Kind::Boosted), 8).unwrap();
    assert!(score(&model, &test) >= 0.95);
}

#[test]
fn xor_is_memorized() {
    let all_features = HyperParams::Bagged(BaggedParams {
        max_features: Some(2),
        n_trees: 25,
        ..Default::default()
    });
    for params in [all_features, HyperParams::default_for(Kind::Boosted)] {
        let model = fit(&xor(), 0, &params, 1).unwrap();
        assert_eq!(score(&model, &xor()), 1.0, "{:?}", params.kind());
    }
}

#[test]
fn json_round_trip_predicts_identically() {
    let data = separable(200, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let probes: Vec<Vec<f64>> = (0..1000).map(|_| (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    for kind in [Kind::Bagged, Kind::Boosted] {
        let model = fit(&data, 0, &HyperParams::default_for(kind), 2).unwrap();
        let back = EnsembleModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        for x in &probes {
            assert_eq!(model.predict(x).unwrap(), back.predict(x).unwrap());
            assert_eq!(model.predict_proba(x).unwrap(), back.predict_proba(x).unwrap());
        }
    }
}

#[test]
fn seeded_fit_is_byte_identical() {
    let data = separable(150, 9);
    for kind in [Kind::Bagged, Kind::Boosted] {
        let a = fit(&data, 0, &HyperParams::default_for(kind), 42).unwrap().to_json().unwrap();
        let b = fit(&data, 0, &HyperParams::default_for(kind), 42).unwrap().to_json().unwrap();
        assert_eq!(a.as_bytes(), b.as_bytes());
    }
    let a = fit(&data, 0, &HyperParams::default_for(Kind::Bagged), 1).unwrap();
    let b = fit(&data, 0, &HyperParams::default_for(Kind::Bagged), 2).unwrap();
    assert_ne!(a.trees, b.trees, "a different seed resamples");
}

#[test]
fn multi_output_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)]).collect();
    let labels: Vec<Vec<String>> = x
        .iter()
        .map(|r| vec![format!("a{}", r[0] as usize), format!("b{}", r[1] as usize)])
        .collect();
    let data = Dataset::from_labels(x.clone(), &labels, vec!["u".into(), "v".into()], vec!["ta".into(), "tb".into()]).unwrap();
    let params = HyperParams::Boosted(BoostedParams {
        n_rounds: 30,
        ..Default::default()
    });
    let model = MultiOutputModel::fit(&data, &params, 3).unwrap();
    let back = MultiOutputModel::from_json(&model.to_json().unwrap()).unwrap();
    let hits = x.iter().zip(&labels).filter(|(r, l)| back.predict_labels(r).unwrap() == **l).count();
    assert!(hits as f64 / x.len() as f64 >= 0.95);
}

#[test]
fn null_conventions_on_four_rows() {
    let truth = [Some("a"), Some("b"), Some("c"), Some("d")];
    let pred = [Some("a"), None, Some("c"), Some("d")];
    assert_eq!(accuracy_score(&truth, &pred, false).unwrap(), 0.75);
    assert_eq!(accuracy_score(&truth, &pred, true).unwrap(), 1.0);
}

#[test]
fn one_hot_color_column() {
    let col = ["light_green", "yellow_green", "dark_green", "light_green", "yellow"];
    let cats = ["light_green", "dark_green", "yellow_green", "yellow"];
    let want: Vec<Vec<u8>> = vec![
        vec![1, 0, 0, 0],
        vec![0, 0, 1, 0],
        vec![0, 1, 0, 0],
        vec![1, 0, 0, 0],
        vec![0, 0, 0, 1],
    ];
    assert_eq!(one_hot(&col, &cats).unwrap(), want);
    assert!(one_hot(&["purple"], &cats).is_err());
}

#[test]
fn degenerate_and_invalid_inputs() {
    let one_class = Dataset::from_indices(vec![vec![0.0], vec![1.0]], vec![1, 1], 2).unwrap();
    assert!(fit(&one_class, 0, &HyperParams::default_for(Kind::Bagged), 0).is_err());
    let empty = Dataset::from_indices(vec![], vec![], 2).unwrap();
    assert!(fit(&empty, 0, &HyperParams::default_for(Kind::Boosted), 0).is_err());
    assert!(Dataset::from_indices(vec![vec![f64::NAN]], vec![0], 2).is_err());
    assert!(Dataset::from_indices(vec![vec![0.0]], vec![5], 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn confusion_trace_equals_accuracy(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = confusion_matrix(&t, &p, 4).unwrap();
        let ot: Vec<Option<usize>> = t.iter().copied().map(Some).collect();
        let op: Vec<Option<usize>> = p.iter().copied().map(Some).collect();
        prop_assert_eq!(matrix_accuracy(&m), accuracy_score(&ot, &op, false).unwrap());
        prop_assert_eq!(m.iter().flatten().sum::<u64>(), t.len() as u64);
    }

    #[test]
    fn split_partitions_rows(n in 2usize..300, f in 0.05f64..0.95, seed in any::<u64>()) {
        let n_test = (f * n as f64).round() as usize;
        if n_test == 0 || n_test == n {
            prop_assert!(ml::split_indices(n, f, seed).is_err());
            return Ok(());
        }
        let (train, test) = ml::split_indices(n, f, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(test.len(), (f * n as f64).round() as usize);
    }
}
