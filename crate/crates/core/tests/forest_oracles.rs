use maasim_core::dataset::{generate_synthetic, Dataset, Group, IndicatorMeta};
use maasim_core::fixtures;
use maasim_core::forest::{cross_validate_with, fit_forest, fit_tree, CvOptions, ForestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference CART on one feature: tries every midpoint, recurses until pure.
enum RefNode {
    Leaf(f64),
    Split(f64, Box<RefNode>, Box<RefNode>),
}

fn sse(ys: &[f64]) -> f64 {
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - m).powi(2)).sum()
}

fn reference_tree(pts: &[(f64, f64)]) -> RefNode {
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    if sse(&ys) == 0.0 || pts.len() < 2 {
        return RefNode::Leaf(ys.iter().sum::<f64>() / ys.len() as f64);
    }
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, f64)> = None;
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            continue;
        }
        let t = (w[0].0 + w[1].0) / 2.0;
        let l: Vec<f64> = sorted.iter().filter(|p| p.0 <= t).map(|p| p.1).collect();
        let r: Vec<f64> = sorted.iter().filter(|p| p.0 > t).map(|p| p.1).collect();
        let cost = sse(&l) + sse(&r);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, t));
        }
    }
    let (_, t) = best.expect("distinct x values");
    let l: Vec<(f64, f64)> = sorted.iter().copied().filter(|p| p.0 <= t).collect();
    let r: Vec<(f64, f64)> = sorted.iter().copied().filter(|p| p.0 > t).collect();
    RefNode::Split(t, Box::new(reference_tree(&l)), Box::new(reference_tree(&r)))
}

fn reference_predict(n: &RefNode, x: f64) -> f64 {
    match n {
        RefNode::Leaf(v) => *v,
        RefNode::Split(t, l, r) => reference_predict(if x <= *t { l } else { r }, x),
    }
}

#[test]
fn staircase_matches_exhaustive_reference() {
    let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.5, (i / 4) as f64 + 1.0)).collect();
    let x: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let cfg = ForestConfig { max_features: Some(1), min_samples_leaf: 1, bootstrap: false, ..Default::default() };
    let tree = fit_tree(&x, &y, &cfg, 3).unwrap();
    let oracle = reference_tree(&pts);
    for &(xi, yi) in &pts {
        assert_eq!(tree.predict(&[xi]), yi);
        assert_eq!(reference_predict(&oracle, xi), yi);
    }
    // Off-sample probes fall between steps the same way.
    for k in 0..40 {
        let q = k as f64 * 0.25 - 0.1;
        assert_eq!(tree.predict(&[q]), reference_predict(&oracle, q), "probe {q}");
    }
}

#[test]
fn decomposition_identity_on_random_inputs() {
    let fx = fixtures::action_fixture(42).unwrap();
    let f = &fx.forest;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cols: Vec<(f64, f64)> = (0..fx.dataset.n_cols())
        .map(|j| {
            let c = fx.dataset.column(j);
            (c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let root_mean = f.trees.iter().map(|t| t.root().value).sum::<f64>() / f.trees.len() as f64;
    for _ in 0..1000 {
        let x: Vec<f64> = cols.iter().map(|&(lo, hi)| rng.random_range(lo - 0.5..hi + 0.5)).collect();
        let d = f.decompose(&x).unwrap();
        let p = f.predict(&x).unwrap();
        assert!((p - (d.bias + d.contributions.iter().sum::<f64>())).abs() < 1e-9);
        assert!((d.bias - root_mean).abs() < 1e-12);
    }
}

fn with_noise_column(ds: &Dataset, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = ds.records.clone();
    for r in records.iter_mut() {
        r.push(rng.random_range(0.0..1.0));
    }
    let mut meta = ds.meta.clone();
    meta.push(IndicatorMeta { index: meta.len(), name: "noise".into(), group: Group::None, unit: String::new() });
    Dataset::new(records, ds.classes.clone(), meta, ds.ids.clone()).unwrap()
}

#[test]
fn pure_noise_feature_has_negligible_importance() {
    let ds = with_noise_column(&fixtures::planted(42).unwrap(), 5);
    let f = fit_forest(&ds, &ForestConfig { seed: 42, ..Default::default() }).unwrap();
    let imp = f.feature_importance();
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let noise = imp[ds.n_cols() - 1];
    assert!(noise < 0.01, "noise importance {noise}");
}

#[test]
fn shuffled_labels_give_chance_recall() {
    let mut ds = generate_synthetic(&fixtures::planted_config(3).unwrap()).unwrap().dataset;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for c in ds.classes.iter_mut() {
        *c = rng.random_range(2..=6);
    }
    let cfg = ForestConfig { n_trees: 30, seed: 1, ..Default::default() };
    let cv = cross_validate_with(&ds, &cfg, &CvOptions { folds: 5, seed: 1, smote_k: Some(5) }).unwrap();
    assert!((cv.macro_recall - 0.2).abs() < 0.08, "macro recall {}", cv.macro_recall);
    let mean = cv.per_class_recall.values().sum::<f64>() / cv.per_class_recall.len() as f64;
    assert!((mean - cv.macro_recall).abs() < 1e-12);
}

#[test]
fn forest_is_deterministic() {
    let ds = fixtures::planted(8).unwrap();
    let cfg = ForestConfig { n_trees: 20, seed: 4, ..Default::default() };
    let a = fit_forest(&ds, &cfg).unwrap().to_json().unwrap();
    let b = fit_forest(&ds, &cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn raising_positively_weighted_indicators_rarely_lowers_the_class() {
    let syn = generate_synthetic(&fixtures::planted_config(42).unwrap()).unwrap();
    assert!(syn.score_weights.iter().all(|&w| w > 0.0));
    let ds = &syn.dataset;
    let f = fit_forest(ds, &ForestConfig { seed: 42, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sample: Vec<usize> = (0..300).map(|_| rng.random_range(0..ds.n_rows())).collect();
    let ok = sample
        .iter()
        .filter(|&&i| {
            let x = &ds.records[i];
            let raised: Vec<f64> = x.iter().map(|v| v * 1.10).collect();
            f.predict_class(&raised).unwrap() >= f.predict_class(x).unwrap() - 1
        })
        .count();
    assert!(ok as f64 >= 0.95 * sample.len() as f64, "{ok}/{}", sample.len());
}
