//! Random-forest regression over ordinal class labels.
//!
//! Trees are CART regressors grown on variance reduction. The forest output is
//! the mean of the tree outputs; a class is obtained by truncating it. Every
//! prediction decomposes exactly into the mean root value plus one
//! contribution per feature, collected along the decision paths.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par;
use crate::preprocess::smote;

pub const MODEL_FORMAT: &str = "maasim-forest";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_SMOTE_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Split,
    Leaf,
}

/// One node of a flat tree. Children are indices into the owning tree's
/// node array; samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub feature: Option<usize>,
    pub threshold: Option<f64>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Mean training target of the samples routed here.
    pub value: f64,
    pub n_samples: usize,
    /// Variance of those targets.
    pub impurity: f64,
}

impl TreeNode {
    pub fn leaf(value: f64, n_samples: usize, impurity: f64) -> Self {
        TreeNode { kind: NodeKind::Leaf, feature: None, threshold: None, left: None, right: None, value, n_samples, impurity }
    }

    pub fn split(feature: usize, threshold: f64, left: usize, right: usize, value: f64, n_samples: usize, impurity: f64) -> Self {
        TreeNode {
            kind: NodeKind::Split,
            feature: Some(feature),
            threshold: Some(threshold),
            left: Some(left),
            right: Some(right),
            value,
            n_samples,
            impurity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root first.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Node indices visited by `x`, root first, leaf last.
    pub fn path(&self, x: &[f64]) -> Vec<usize> {
        let mut out = vec![0];
        let mut i = 0;
        while let TreeNode { kind: NodeKind::Split, feature: Some(f), threshold: Some(t), left: Some(l), right: Some(r), .. } =
            self.nodes[i]
        {
            i = if x[f] <= t { l } else { r };
            out.push(i);
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match (n.kind, n.feature, n.threshold, n.left, n.right) {
                (NodeKind::Split, Some(f), Some(t), Some(l), Some(r)) => i = if x[f] <= t { l } else { r },
                _ => return n.value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match (t.nodes[i].left, t.nodes[i].right) {
                (Some(l), Some(r)) => 1 + go(t, l).max(go(t, r)),
                _ => 0,
            }
        }
        go(self, 0)
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Leaf => {
                    if n.left.is_some() || n.right.is_some() {
                        return Err(Error::Format(format!("leaf {i} has children")));
                    }
                }
                NodeKind::Split => {
                    let ok = matches!((n.feature, n.threshold, n.left, n.right),
                        (Some(f), Some(t), Some(l), Some(r))
                            if f < n_features && t.is_finite() && l > i && r > i && l < self.nodes.len() && r < self.nodes.len());
                    if !ok {
                        return Err(Error::Format(format!("malformed split node {i}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌈√p⌉.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_features: None, min_samples_leaf: 1, max_depth: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn resolved_max_features(&self, n_features: usize) -> usize {
        self.max_features.unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        let m = self.resolved_max_features(n_features);
        if m == 0 || m > n_features {
            return Err(Error::Config(format!("max_features {m} outside 1..={n_features}")));
        }
        Ok(())
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    max_features: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    /// Position in the feature-sorted sample list where the right side starts.
    cut: usize,
    sorted: Vec<usize>,
    gain: f64,
}

impl Builder<'_> {
    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let n = samples.len();
        let (sum, sq) = samples.iter().fold((0.0, 0.0), |(s, q), &i| (s + self.y[i], q + self.y[i] * self.y[i]));
        let mean = sum / n as f64;
        let sse = (sq - sum * sum / n as f64).max(0.0);
        let pure = samples.iter().all(|&i| self.y[i] == self.y[samples[0]]);
        let impurity = if pure { 0.0 } else { sse / n as f64 };

        let id = self.nodes.len();
        self.nodes.push(TreeNode::leaf(mean, n, impurity));
        if pure || n < 2 * self.min_leaf || self.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some(best) = self.best_split(&samples, sse) else {
            return id;
        };
        let left: Vec<usize> = best.sorted[..best.cut].to_vec();
        let right: Vec<usize> = best.sorted[best.cut..].to_vec();
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = TreeNode::split(best.feature, best.threshold, l, r, mean, n, impurity);
        id
    }

    fn best_split(&mut self, samples: &[usize], parent_sse: f64) -> Option<BestSplit> {
        let p = self.x.first().map_or(0, Vec::len);
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(&mut self.rng);
        let n = samples.len();
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        for f in features {
            if tried >= self.max_features {
                break;
            }
            let mut sorted = samples.to_vec();
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            if self.x[sorted[0]][f] == self.x[sorted[n - 1]][f] {
                continue;
            }
            tried += 1;
            let total: f64 = sorted.iter().map(|&i| self.y[i]).sum();
            let total_sq: f64 = sorted.iter().map(|&i| self.y[i] * self.y[i]).sum();
            let (mut ls, mut lq) = (0.0, 0.0);
            let mut local: Option<(f64, usize)> = None;
            for pos in 0..n - 1 {
                let yi = self.y[sorted[pos]];
                ls += yi;
                lq += yi * yi;
                let nl = pos + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                if self.x[sorted[pos]][f] == self.x[sorted[pos + 1]][f] {
                    continue;
                }
                let rs = total - ls;
                let rq = total_sq - lq;
                let sse_l = (lq - ls * ls / nl as f64).max(0.0);
                let sse_r = (rq - rs * rs / nr as f64).max(0.0);
                let gain = parent_sse - sse_l - sse_r;
                if local.is_none_or(|(g, _)| gain > g) {
                    local = Some((gain, nl));
                }
            }
            if let Some((gain, cut)) = local {
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let lo = self.x[sorted[cut - 1]][f];
                    let hi = self.x[sorted[cut]][f];
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit { feature: f, threshold, cut, sorted, gain });
                }
            }
        }
        best
    }
}

fn fit_tree_on(x: &[Vec<f64>], y: &[f64], samples: Vec<usize>, cfg: &ForestConfig, seed: u64) -> Result<Tree> {
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    let p = x[0].len();
    cfg.validate(p)?;
    let mut b = Builder {
        x,
        y,
        max_features: cfg.resolved_max_features(p),
        min_leaf: cfg.min_samples_leaf,
        max_depth: cfg.max_depth,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    b.grow(samples, 0);
    Ok(Tree { nodes: b.nodes })
}

/// Grows one regression tree on all rows of `x`.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig, seed: u64) -> Result<Tree> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    fit_tree_on(x, y, (0..x.len()).collect(), cfg, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub n_features: usize,
    pub class_range: (i32, i32),
    /// Indicator names in feature order.
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub bias: f64,
    pub contributions: Vec<f64>,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.bias + self.contributions.iter().sum::<f64>()
    }
}

/// Trains a forest on the dataset's class labels treated as real targets.
pub fn fit_forest(ds: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    if ds.n_rows() == 0 {
        return Err(Error::EmptyData);
    }
    cfg.validate(ds.n_cols())?;
    let y: Vec<f64> = ds.classes.iter().map(|&c| c as f64).collect();
    let n = ds.n_rows();
    let trees = par::map_range(cfg.n_trees, |t| {
        let tree_seed = par::derive_seed(cfg.seed, t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
        let samples: Vec<usize> = if cfg.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
        fit_tree_on(&ds.records, &y, samples, cfg, rng.random())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let lo = *ds.classes.iter().min().unwrap_or(&1);
    let hi = *ds.classes.iter().max().unwrap_or(&1);
    Ok(Forest { trees, config: cfg.clone(), n_features: ds.n_cols(), class_range: (lo, hi), feature_names: ds.names() })
}

impl Forest {
    /// Wraps hand-built trees.
    pub fn from_trees(trees: Vec<Tree>, n_features: usize, class_range: (i32, i32), feature_names: Vec<String>) -> Result<Self> {
        let f = Forest {
            trees,
            config: ForestConfig { n_trees: 0, ..Default::default() },
            n_features,
            class_range,
            feature_names,
        };
        let mut f = f;
        f.config.n_trees = f.trees.len();
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Format("forest without trees".into()));
        }
        if self.feature_names.len() != self.n_features {
            return Err(Error::Format("feature name count does not match n_features".into()));
        }
        if self.class_range.0 > self.class_range.1 {
            return Err(Error::Format("empty class range".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.n_features))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Shape { expected: self.n_features, got: x.len() });
        }
        Ok(())
    }

    /// Mean of the tree outputs.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Truncated prediction, clamped to the training class range.
    pub fn predict_class(&self, x: &[f64]) -> Result<i32> {
        Ok(self.class_of(self.predict(x)?))
    }

    pub fn class_of(&self, score: f64) -> i32 {
        let (lo, hi) = self.class_range;
        (score.floor() as i64).clamp(lo as i64, hi as i64) as i32
    }

    pub fn decompose(&self, x: &[f64]) -> Result<Decomposition> {
        self.check(x)?;
        let mut bias = 0.0;
        let mut contributions = vec![0.0; self.n_features];
        for t in &self.trees {
            let path = t.path(x);
            bias += t.nodes[path[0]].value;
            for w in path.windows(2) {
                let parent = &t.nodes[w[0]];
                let child = &t.nodes[w[1]];
                if let Some(f) = parent.feature {
                    contributions[f] += child.value - parent.value;
                }
            }
        }
        let j = self.trees.len() as f64;
        contributions.iter_mut().for_each(|c| *c /= j);
        Ok(Decomposition { bias: bias / j, contributions })
    }

    /// Mean decrease in impurity, normalised per tree and then averaged.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        for t in &self.trees {
            let root_n = t.root().n_samples as f64;
            let mut imp = vec![0.0; self.n_features];
            for n in &t.nodes {
                if let (Some(f), Some(l), Some(r)) = (n.feature, n.left, n.right) {
                    let (l, r) = (&t.nodes[l], &t.nodes[r]);
                    let ns = n.n_samples as f64;
                    let child = (l.n_samples as f64 * l.impurity + r.n_samples as f64 * r.impurity) / ns;
                    imp[f] += ns / root_n * (n.impurity - child);
                }
            }
            let s: f64 = imp.iter().sum();
            if s > 0.0 {
                for (a, b) in total.iter_mut().zip(&imp) {
                    *a += b / s;
                }
            }
        }
        let s: f64 = total.iter().sum();
        if s > 0.0 {
            total.iter_mut().for_each(|v| *v /= s);
        }
        total
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFileRef { format: MODEL_FORMAT, version: MODEL_VERSION, forest: self };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(MODEL_FORMAT) => {}
            _ => return Err(Error::Format("not a maasim forest file".into())),
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("missing model version".into()))?;
        if version != MODEL_VERSION as u64 {
            return Err(Error::Version { found: version as u32, expected: MODEL_VERSION });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Format(format!("model file: {e}")))?;
        file.forest.validate()?;
        Ok(file.forest)
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    forest: &'a Forest,
}

#[derive(Deserialize)]
struct ModelFile {
    #[allow(dead_code)]
    format: String,
    #[allow(dead_code)]
    version: u32,
    #[serde(flatten)]
    forest: Forest,
}

pub fn save_model(f: &Forest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, f.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Forest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Forest::from_json(&text)
}

/// Removes the columns whose importance falls below `threshold`. Returns the
/// reduced dataset and the removed names.
pub fn prune_by_importance(ds: &Dataset, f: &Forest, threshold: f64) -> Result<(Dataset, Vec<String>)> {
    if f.n_features != ds.n_cols() {
        return Err(Error::Shape { expected: ds.n_cols(), got: f.n_features });
    }
    let imp = f.feature_importance();
    let keep: Vec<usize> = (0..ds.n_cols()).filter(|&j| imp[j] >= threshold).collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset(format!("every importance is below {threshold}")));
    }
    let removed = (0..ds.n_cols()).filter(|&j| imp[j] < threshold).map(|j| ds.meta[j].name.clone()).collect();
    Ok((ds.select_columns(&keep), removed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub per_class_recall: BTreeMap<i32, f64>,
    pub macro_recall: f64,
    /// Fold index per dataset row.
    pub fold_assignments: Vec<usize>,
    /// Held-out predicted class per dataset row.
    pub predictions: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// SMOTE neighbour count applied to each training split; `None` disables
    /// oversampling.
    pub smote_k: Option<usize>,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    let mut folds = vec![0; ds.n_rows()];
    for (ci, (&class, rows)) in ds.rows_by_class().iter().enumerate() {
        if rows.len() < k {
            return Err(Error::Stratification { class, count: rows.len(), folds: k });
        }
        let mut rows = rows.clone();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(par::derive_seed(seed, ci as u64)));
        for (pos, r) in rows.into_iter().enumerate() {
            folds[r] = pos % k;
        }
    }
    Ok(folds)
}

pub fn cross_validate(ds: &Dataset, cfg: &ForestConfig, k: usize, seed: u64) -> Result<CvReport> {
    cross_validate_with(ds, cfg, &CvOptions { folds: k, seed, smote_k: Some(DEFAULT_SMOTE_K) })
}

/// k-fold cross-validated recall of the truncated forest prediction. SMOTE
/// only ever sees the training split of a fold.
pub fn cross_validate_with(ds: &Dataset, cfg: &ForestConfig, opts: &CvOptions) -> Result<CvReport> {
    let k = opts.folds;
    let folds = stratified_folds(ds, k, opts.seed)?;
    let fold_preds = par::map_range(k, |fold| -> Result<Vec<(usize, i32)>> {
        let train_rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| folds[i] != fold).collect();
        let test_rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| folds[i] == fold).collect();
        let mut train = ds.select_rows(&train_rows);
        if let Some(sk) = opts.smote_k {
            train = smote(&train, sk, par::derive_seed(opts.seed, 1000 + fold as u64))?;
        }
        let forest = fit_forest(&train, cfg)?;
        test_rows.into_iter().map(|i| Ok((i, forest.predict_class(&ds.records[i])?))).collect()
    });
    let mut predictions = vec![0; ds.n_rows()];
    for fp in fold_preds {
        for (i, c) in fp? {
            predictions[i] = c;
        }
    }
    let mut per_class_recall = BTreeMap::new();
    for (class, rows) in ds.rows_by_class() {
        let hit = rows.iter().filter(|&&i| predictions[i] == class).count();
        per_class_recall.insert(class, hit as f64 / rows.len() as f64);
    }
    let macro_recall = per_class_recall.values().sum::<f64>() / per_class_recall.len().max(1) as f64;
    Ok(CvReport { k, per_class_recall, macro_recall, fold_assignments: folds, predictions })
}
