//! Reproducible datasets and problems shared by tests, benches and the CLI.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{generate_synthetic, Dataset, Group, IndicatorMeta, SyntheticConfig};
use crate::error::Result;
use crate::forest::{fit_forest, Forest, ForestConfig, Tree, TreeNode};
use crate::moo::AdditiveProblem;
use crate::simcore::{derive_catalog, ActionCatalog, ActionKind, ActionSpec, SessionState};

/// Two-action problem with a known front: base 3.0, action A adds 0.5,
/// action B adds 0.1.
pub struct Toy {
    pub forest: Forest,
    pub catalog: ActionCatalog,
    pub session: SessionState,
}

fn stump(feature: usize, threshold: f64, low: f64, high: f64) -> Tree {
    Tree {
        nodes: vec![
            TreeNode::split(feature, threshold, 1, 2, (low + high) / 2.0, 2, 0.0),
            TreeNode::leaf(low, 1, 0.0),
            TreeNode::leaf(high, 1, 0.0),
        ],
    }
}

pub fn toy() -> Result<Toy> {
    let forest = Forest::from_trees(
        vec![stump(0, 10.5, 3.0, 4.0), stump(1, 10.5, 3.0, 3.2)],
        2,
        (1, 6),
        vec!["facilities".into(), "greenery".into()],
    )?;
    let direct = |id: &str, name: &str, k: usize| ActionSpec {
        id: id.into(),
        name: name.into(),
        kind: ActionKind::Direct,
        targets: vec![(k, 0.10)],
        cost_turns: 1,
    };
    let catalog = ActionCatalog { actions: vec![direct("A", "Add facilities", 0), direct("B", "Plant trees", 1)] };
    let session = SessionState::new("toy", vec![10.0, 10.0], &forest)?;
    Ok(Toy { forest, catalog, session })
}

pub fn toy_additive() -> AdditiveProblem {
    AdditiveProblem { base: 3.0, gains: vec![0.5, 0.1], bounds: (1.0, 6.0) }
}

/// Every bit adds the same gain, so all 2^n − 1 genomes are non-dominated.
pub fn plateau(n_bits: usize) -> AdditiveProblem {
    AdditiveProblem { base: 2.0, gains: vec![0.25; n_bits], bounds: (1.0, 6.0) }
}

/// Planted five-class data: 1000 rows, 20 noisy indicators of one latent
/// factor, classes 2..=6 in equal shares.
pub fn planted_config(seed: u64) -> Result<SyntheticConfig> {
    SyntheticConfig {
        n_rows: 1000,
        n_latent: 1,
        n_indicators: 20,
        noise_sd: 0.03,
        seed,
        offset: 10.0,
        first_class: 2,
        ..SyntheticConfig::default()
    }
    .with_quantile_cuts(&[0.2, 0.4, 0.6, 0.8])
}

pub fn planted(seed: u64) -> Result<Dataset> {
    Ok(generate_synthetic(&planted_config(seed)?)?.dataset)
}

/// Column counts of [`limburg_like`].
pub const LIMBURG_INFORMATIVE: usize = 44;
pub const LIMBURG_SPARSE: usize = 3;
pub const LIMBURG_DUPLICATES: usize = 6;

/// 997 × 54 dataset shaped like the original study: 44 informative
/// indicators, 3 trailing near-empty indicators, one constant indicator and
/// 6 affine copies, with six classes of which class 1 has exactly 3 rows.
pub fn limburg_like(seed: u64) -> Result<Dataset> {
    // Hidden score: unweighted sum over four latent blocks.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 997;
    let mut records = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let row: Vec<f64> = (0..LIMBURG_INFORMATIVE)
            .map(|j| {
                let e: f64 = StandardNormal.sample(&mut rng);
                10.0 + z[j % 4] + 0.3 * e
            })
            .collect();
        hidden.push(row.iter().sum::<f64>());
        records.push(row);
    }
    let mut sorted = hidden.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = [3, 199, 449, 698, 897].iter().map(|&i| sorted[i]).collect();
    let classes: Vec<i32> = hidden.iter().map(|h| 1 + cuts.iter().filter(|&&c| c <= *h).count() as i32).collect();
    let mut meta: Vec<IndicatorMeta> = (0..LIMBURG_INFORMATIVE)
        .map(|j| IndicatorMeta {
            index: j,
            name: format!("ind_{j:02}"),
            group: Group::DISPLAY[j % Group::DISPLAY.len()],
            unit: "index".into(),
        })
        .collect();
    let ids: Vec<String> = (0..n).map(|i| format!("NB{i:04}")).collect();

    let push = |meta: &mut Vec<IndicatorMeta>, name: String, group: Group| {
        meta.push(IndicatorMeta { index: 0, name, group, unit: String::new() });
    };
    for s in 0..LIMBURG_SPARSE {
        let hits: Vec<usize> = (0..2).map(|_| rng.random_range(0..n)).collect();
        for (i, r) in records.iter_mut().enumerate() {
            r.push(if hits.contains(&i) { 1.0 } else { 0.0 });
        }
        push(&mut meta, format!("sparse_{s}"), Group::None);
    }
    for r in records.iter_mut() {
        r.push(1.0);
    }
    push(&mut meta, "constant".into(), Group::None);
    for d in 0..LIMBURG_DUPLICATES {
        for r in records.iter_mut() {
            let v = 2.0 * r[d] + 1.0;
            r.push(v);
        }
        let (name, group) = (format!("{}_scaled", meta[d].name), meta[d].group);
        push(&mut meta, name, group);
    }
    Dataset::new(records, classes, meta, ids)
}

/// Data behind [`action_fixture`]: three latent factors, so single
/// indicators move the score independently.
pub fn action_config(seed: u64) -> Result<SyntheticConfig> {
    SyntheticConfig { n_latent: 3, noise_sd: 0.3, ..planted_config(seed)? }.with_quantile_cuts(&[0.2, 0.4, 0.6, 0.8])
}

/// Twelve-action problem: forest trained on [`action_config`] data, catalog
/// derived from it, session at the lowest-scoring neighbourhood.
pub struct ActionFixture {
    pub dataset: Dataset,
    pub forest: Forest,
    pub catalog: ActionCatalog,
    pub session: SessionState,
}

pub fn action_fixture(seed: u64) -> Result<ActionFixture> {
    let dataset = generate_synthetic(&action_config(seed)?)?.dataset;
    let forest = fit_forest(&dataset, &ForestConfig { n_trees: 100, seed, ..ForestConfig::default() })?;
    let catalog = derive_catalog(&dataset, &forest)?;
    let scores: Vec<f64> = dataset.records.iter().map(|r| forest.predict(r)).collect::<Result<_>>()?;
    let low = (0..scores.len()).min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b))).expect("rows");
    let session = SessionState::new(dataset.ids[low].clone(), dataset.records[low].clone(), &forest)?;
    Ok(ActionFixture { dataset, forest, catalog, session })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::class_histogram;

    #[test]
    fn toy_scores() {
        let t = toy().unwrap();
        assert_eq!(t.session.score, 3.0);
        let mut s = t.session.clone();
        s.apply(&t.catalog.actions[0], &t.forest).unwrap();
        assert_eq!(s.score, 3.5);
    }

    #[test]
    fn limburg_shape() {
        let ds = limburg_like(7).unwrap();
        assert_eq!((ds.n_rows(), ds.n_cols()), (997, 54));
        assert_eq!(class_histogram(&ds)[&1], 3);
    }
}
