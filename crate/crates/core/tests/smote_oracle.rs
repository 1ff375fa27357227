use maasim_core::dataset::{class_histogram, Dataset, Group, IndicatorMeta};
use maasim_core::preprocess::smote;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn imbalanced(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = [(1, 40), (2, 9), (3, 4)];
    let mut records = Vec::new();
    let mut classes = Vec::new();
    for (class, n) in counts {
        for _ in 0..n {
            records.push((0..3).map(|_| rng.random_range(0.0..10.0) + class as f64).collect());
            classes.push(class);
        }
    }
    let meta = (0..3).map(|j| IndicatorMeta { index: j, name: format!("x{j}"), group: Group::None, unit: String::new() }).collect();
    let ids = (0..classes.len()).map(|i| format!("r{i}")).collect();
    Dataset::new(records, classes, meta, ids).unwrap()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// k nearest same-class rows of `i` by full sort, ties by row index.
fn brute_knn(ds: &Dataset, i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..ds.n_rows()).filter(|&j| j != i && ds.classes[j] == ds.classes[i]).collect();
    others.sort_by(|&a, &b| dist2(&ds.records[i], &ds.records[a]).total_cmp(&dist2(&ds.records[i], &ds.records[b])).then(a.cmp(&b)));
    others.truncate(k);
    others
}

/// Whether `p` lies on the segment from `a` to `b`.
fn on_segment(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = d.iter().map(|v| v * v).sum();
    if len2 == 0.0 {
        return dist2(p, a) < 1e-18;
    }
    let t = p.iter().zip(a).zip(&d).map(|((pi, ai), di)| (pi - ai) * di).sum::<f64>() / len2;
    if !(-1e-12..=1.0 + 1e-12).contains(&t) {
        return false;
    }
    let proj: Vec<f64> = a.iter().zip(&d).map(|(ai, di)| ai + t * di).collect();
    dist2(p, &proj) < 1e-18
}

#[test]
fn synthetic_rows_lie_on_neighbour_segments() {
    let ds = imbalanced(1);
    let k = 5;
    let out = smote(&ds, k, 42).unwrap();
    let hist = class_histogram(&out);
    assert!(hist.values().all(|&c| c == 0 || c == 40), "{hist:?}");
    assert_eq!(out.n_rows(), 120);
    assert_eq!(&out.records[..ds.n_rows()], &ds.records[..]);

    let knn: Vec<Vec<usize>> = (0..ds.n_rows()).map(|i| brute_knn(&ds, i, k)).collect();
    for s in ds.n_rows()..out.n_rows() {
        let p = &out.records[s];
        let class = out.classes[s];
        let found = (0..ds.n_rows())
            .filter(|&i| ds.classes[i] == class)
            .any(|i| knn[i].iter().any(|&n| on_segment(p, &ds.records[i], &ds.records[n])));
        assert!(found, "synthetic row {s} of class {class} is on no neighbour segment");
    }
}

#[test]
fn smote_is_deterministic() {
    let ds = imbalanced(2);
    assert_eq!(smote(&ds, 5, 7).unwrap(), smote(&ds, 5, 7).unwrap());
    assert_ne!(smote(&ds, 5, 7).unwrap(), smote(&ds, 5, 8).unwrap());
}
