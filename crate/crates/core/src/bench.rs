//! End-to-end drivers: the model-building pipeline and the solver
//! tournament with its metric tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{group_weights, kmo, save_group_weights, GroupWeights};
use crate::dataset::{load_dataset, load_schema, save_dataset, save_schema, Dataset, Group};
use crate::error::{Error, Result};
use crate::forest::{cross_validate_with, fit_forest, prune_by_importance, save_model, CvOptions, CvReport, Forest, ForestConfig};
use crate::metrics::{evaluate_front, significance_matrix, Metric, MetricReport, SignificanceMatrix};
use crate::moo::{brute_force_front, run, AlgoConfig, Algorithm, Front, Individual, Problem, RunResult};
use crate::par;
use crate::preprocess::{correlation_matrix, drop_constant, drop_perfect_correlation, filter_rare_classes, PruneReport};
use crate::simcore::{derive_catalog, load_catalog, save_catalog, ActionCatalog};

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the forest, the folds and SMOTE.
    pub seed: u64,
    pub forest: ForestConfig,
    pub folds: usize,
    pub min_class_count: usize,
    pub correlation_tolerance: f64,
    pub importance_threshold: f64,
    /// SMOTE neighbours inside cross-validation; 0 disables oversampling.
    pub smote_k: usize,
    /// Indicator schema (names, groups, units) applied to the dataset.
    pub schema: Option<PathBuf>,
    /// Catalog with indicators given by name; derived from the model when absent.
    pub catalog: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            forest: ForestConfig::default(),
            folds: 10,
            min_class_count: 4,
            correlation_tolerance: 1e-9,
            importance_threshold: 0.01,
            smote_k: 5,
            schema: None,
            catalog: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths inside the file are taken relative to it.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.schema, &mut cfg.catalog].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn forest_config(&self) -> ForestConfig {
        ForestConfig { seed: self.seed, ..self.forest.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub input_rows: usize,
    pub input_columns: usize,
    pub columns_after_constant: usize,
    pub columns_after_correlation: usize,
    pub rows_after_class_filter: usize,
    pub final_columns: usize,
    pub pruned: PruneReport,
    pub low_importance: Vec<String>,
    pub kmo: Option<f64>,
    pub macro_recall: f64,
    pub per_class_recall: BTreeMap<i32, f64>,
}

pub struct PipelineOutcome {
    /// Rows after the class filter, columns after importance pruning.
    pub dataset: Dataset,
    pub forest: Forest,
    pub catalog: ActionCatalog,
    pub groups: GroupWeights,
    pub cv: CvReport,
    pub report: PipelineReport,
}

/// Cleans the data, trains and prunes the model, cross-validates it and
/// derives the action catalog and group weights.
pub fn pipeline(raw: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let fcfg = cfg.forest_config();
    let (ds, mut pruned) = drop_constant(raw)?;
    let columns_after_constant = ds.n_cols();
    let (ds, r) = drop_perfect_correlation(&ds, cfg.correlation_tolerance)?;
    pruned.merge(r);
    let columns_after_correlation = ds.n_cols();
    let (ds, r) = filter_rare_classes(&ds, cfg.min_class_count)?;
    pruned.merge(r);
    let rows_after_class_filter = ds.n_rows();

    let first = fit_forest(&ds, &fcfg)?;
    let (ds, low_importance) = prune_by_importance(&ds, &first, cfg.importance_threshold)?;
    let forest = fit_forest(&ds, &fcfg)?;
    let cv = cross_validate_with(
        &ds,
        &fcfg,
        &CvOptions { folds: cfg.folds, seed: cfg.seed, smote_k: (cfg.smote_k > 0).then_some(cfg.smote_k) },
    )?;

    let names = ds.names();
    let catalog = match &cfg.catalog {
        Some(path) => {
            let c = load_catalog(path, &names)?;
            c.validate(names.len())?;
            c
        }
        None => derive_catalog(&ds, &forest)?,
    };
    let groups: BTreeMap<usize, Group> = ds.meta.iter().map(|m| (m.index, m.group)).collect();
    let weights = group_weights(&forest, &ds, &groups)?;
    let kmo = correlation_matrix(&ds).and_then(|c| kmo(&c)).ok().map(|k| k.value);

    let report = PipelineReport {
        input_rows: raw.n_rows(),
        input_columns: raw.n_cols(),
        columns_after_constant,
        columns_after_correlation,
        rows_after_class_filter,
        final_columns: ds.n_cols(),
        pruned,
        low_importance,
        kmo,
        macro_recall: cv.macro_recall,
        per_class_recall: cv.per_class_recall.clone(),
    };
    Ok(PipelineOutcome { dataset: ds, forest, catalog, groups: weights, cv, report })
}

/// Files written by [`write_pipeline`].
pub const PIPELINE_FILES: [&str; 8] = [
    "model.json",
    "catalog.json",
    "groups.json",
    "dataset.csv",
    "schema.json",
    "prune_report.txt",
    "report.json",
    "cv_report.json",
];

pub fn write_pipeline(outcome: &PipelineOutcome, out: &Path) -> Result<()> {
    create_dir(out)?;
    let names = outcome.dataset.names();
    save_model(&outcome.forest, out.join("model.json"))?;
    save_catalog(&outcome.catalog, &names, out.join("catalog.json"))?;
    save_group_weights(&outcome.groups, &names, out.join("groups.json"))?;
    save_dataset(&outcome.dataset, out.join("dataset.csv"))?;
    save_schema(&outcome.dataset.meta, out.join("schema.json"))?;
    let mut text = outcome.report.pruned.to_text();
    for n in &outcome.report.low_importance {
        let _ = writeln!(text, "{n}\timportance below threshold");
    }
    write(&out.join("prune_report.txt"), text)?;
    write(&out.join("report.json"), serde_json::to_string_pretty(&outcome.report)?)?;
    write(&out.join("cv_report.json"), serde_json::to_string_pretty(&outcome.cv)?)?;
    Ok(())
}

/// Loads the dataset (and schema), runs [`pipeline`] and writes its files.
pub fn run_pipeline(dataset: impl AsRef<Path>, out: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let mut ds = load_dataset(dataset)?;
    if let Some(schema) = &cfg.schema {
        ds.apply_schema(&load_schema(schema)?)?;
    }
    let outcome = pipeline(&ds, cfg)?;
    write_pipeline(&outcome, out.as_ref())?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub algorithms: Vec<Algorithm>,
    pub budgets: Vec<usize>,
    pub runs: usize,
    pub base_seed: u64,
    /// Population, archive, ε and variation settings; budget and seed are
    /// set per run.
    pub algo: AlgoConfig,
    /// Worker threads for concurrent runs; `None` uses every core.
    pub jobs: Option<usize>,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            algorithms: Algorithm::ALL.to_vec(),
            budgets: vec![10_000, 20_000],
            runs: 10,
            base_seed: 42,
            algo: AlgoConfig::default(),
            jobs: None,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() || self.budgets.is_empty() {
            return Err(Error::Config("bench needs at least one algorithm and one budget".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        for &b in &self.budgets {
            AlgoConfig { evaluations: b, ..self.algo.clone() }.validate()?;
        }
        Ok(())
    }

    /// Every (algorithm, budget, run) triple in output order.
    fn jobs_list(&self) -> Vec<(Algorithm, usize, usize)> {
        let mut v = Vec::new();
        for &a in &self.algorithms {
            for &b in &self.budgets {
                for r in 0..self.runs {
                    v.push((a, b, r));
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub algorithm: Algorithm,
    pub budget: usize,
    pub run: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub front: Front,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub budget: usize,
    pub metric: Metric,
    pub mean: f64,
    pub sd: f64,
}

pub struct BenchOutcome {
    pub runs: Vec<BenchRun>,
    pub reference: Front,
    /// True when the reference front is the exhaustive oracle.
    pub exact_reference: bool,
    pub summary: Vec<SummaryRow>,
    /// One matrix per metric over the largest budget (empty for a single algorithm).
    pub significance: Vec<(Metric, SignificanceMatrix)>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

fn summarise(plan: &BenchPlan, runs: &[BenchRun]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &a in &plan.algorithms {
        for &b in &plan.budgets {
            let rows: Vec<&BenchRun> = runs.iter().filter(|r| r.algorithm == a && r.budget == b).collect();
            if rows.is_empty() {
                continue;
            }
            for m in Metric::ALL {
                let vals: Vec<f64> = rows.iter().map(|r| m.of(&r.metrics)).collect();
                let (mean, sd) = mean_sd(&vals);
                out.push(SummaryRow { algorithm: a, budget: b, metric: m, mean, sd });
            }
        }
    }
    out
}

fn significance(plan: &BenchPlan, runs: &[BenchRun]) -> Result<Vec<(Metric, SignificanceMatrix)>> {
    if plan.algorithms.len() < 2 {
        return Ok(Vec::new());
    }
    let top = *plan.budgets.iter().max().expect("validated");
    Metric::ALL
        .into_iter()
        .map(|m| {
            let samples: Vec<(String, Vec<f64>)> = plan
                .algorithms
                .iter()
                .map(|&a| {
                    let v = runs.iter().filter(|r| r.algorithm == a && r.budget == top).map(|r| m.of(&r.metrics)).collect();
                    (a.name().to_string(), v)
                })
                .collect();
            Ok((m, significance_matrix(&samples, m.better())?))
        })
        .collect()
}

/// Runs the tournament. On failure, the runs that did finish are returned
/// alongside the first error so that they can still be written out.
pub fn bench(problem: &dyn Problem, plan: &BenchPlan) -> std::result::Result<BenchOutcome, (Error, Option<BenchOutcome>)> {
    plan.validate().map_err(|e| (e, None))?;
    let (reference, exact_reference) = match brute_force_front(problem) {
        Ok(f) => (Some(f), true),
        Err(Error::TooLarge(_)) => (None, false),
        Err(e) => return Err((e, None)),
    };

    let jobs = plan.jobs_list();
    let results = par::with_jobs(plan.jobs.unwrap_or(0), || {
        par::map_slice(&jobs, |&(a, b, r)| {
            let seed = plan.base_seed + r as u64;
            let cfg = AlgoConfig { evaluations: b, seed, ..plan.algo.clone() };
            run(a, problem, &cfg).map(|o| (a, b, r, seed, o))
        })
    });
    let mut first_err = None;
    let mut done = Vec::new();
    for res in results {
        match res {
            Ok(x) => done.push(x),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    for (_, _, _, _, o) in &done {
        if o.evaluations > plan.budgets.iter().copied().max().unwrap_or(0) {
            return Err((Error::Config("evaluation budget exceeded".into()), None));
        }
    }

    let reference = reference.unwrap_or_else(|| {
        let all: Vec<Individual> = done.iter().flat_map(|d| d.4.front.members.iter().cloned()).collect();
        Front::from_population(&all)
    });
    let mut runs = Vec::with_capacity(done.len());
    for (algorithm, budget, run, seed, o) in done {
        let metrics = match evaluate_front(&o.front, &reference) {
            Ok(m) => m,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        runs.push(BenchRun { algorithm, budget, run, seed, evaluations: o.evaluations, front: o.front, metrics });
    }
    let summary = summarise(plan, &runs);
    let mut outcome = BenchOutcome { runs, reference, exact_reference, summary, significance: Vec::new() };
    if let Some(e) = first_err {
        return Err((e, Some(outcome)));
    }
    outcome.significance = significance(plan, &outcome.runs).map_err(|e| (e, None))?;
    Ok(outcome)
}

pub fn runs_csv(runs: &[BenchRun]) -> String {
    let mut s = String::from(
        "algorithm,budget,run,seed,evaluations,spread,spread_degenerate,spacing,cardinality,best_score,min_turns\n",
    );
    for r in runs {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.algorithm, r.budget, r.run, r.seed, r.evaluations, m.spread, m.spread_degenerate, m.spacing, m.cardinality,
            m.best_score, m.min_turns
        );
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("algorithm,budget,metric,mean,sd\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.algorithm, r.budget, r.metric.name(), r.mean, r.sd);
    }
    s
}

#[derive(Serialize)]
struct FrontsFile<'a> {
    reference: Vec<crate::moo::SolutionRecord>,
    exact_reference: bool,
    runs: Vec<(usize, RunResult)>,
    #[serde(skip)]
    _marker: std::marker::PhantomData<&'a ()>,
}

/// Writes runs.csv, summary.csv, summary.json, fronts.json and one
/// significance_<metric>.csv per metric.
pub fn write_bench(outcome: &BenchOutcome, out: &Path) -> Result<()> {
    create_dir(out)?;
    write(&out.join("runs.csv"), runs_csv(&outcome.runs))?;
    write(&out.join("summary.csv"), summary_csv(&outcome.summary))?;
    write(&out.join("summary.json"), serde_json::to_string_pretty(&outcome.summary)?)?;
    let reference = RunResult::new(
        Algorithm::Nsga2,
        0,
        &crate::moo::RunOutcome { front: outcome.reference.clone(), evaluations: 0 },
    )
    .front;
    let fronts = FrontsFile {
        reference,
        exact_reference: outcome.exact_reference,
        runs: outcome
            .runs
            .iter()
            .map(|r| {
                (r.budget, RunResult::new(r.algorithm, r.seed, &crate::moo::RunOutcome { front: r.front.clone(), evaluations: r.evaluations }))
            })
            .collect(),
        _marker: std::marker::PhantomData,
    };
    write(&out.join("fronts.json"), serde_json::to_string(&fronts)?)?;
    for (m, matrix) in &outcome.significance {
        write(&out.join(format!("significance_{}.csv", m.name())), matrix.to_csv())?;
    }
    Ok(())
}

/// Runs the tournament and writes its files; finished runs are written even
/// when a later step fails.
pub fn run_bench(problem: &dyn Problem, plan: &BenchPlan, out: impl AsRef<Path>) -> Result<BenchOutcome> {
    match bench(problem, plan) {
        Ok(o) => {
            write_bench(&o, out.as_ref())?;
            Ok(o)
        }
        Err((e, partial)) => {
            if let Some(p) = partial {
                create_dir(out.as_ref())?;
                write(&out.as_ref().join("runs.csv"), runs_csv(&p.runs))?;
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn toy_bench_files() {
        let p = fixtures::toy_additive();
        let plan = BenchPlan {
            budgets: vec![200, 400],
            runs: 3,
            algo: AlgoConfig { population: 20, archive: 20, ..Default::default() },
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let o = run_bench(&p, &plan, dir.path()).unwrap();
        assert_eq!(o.runs.len(), 4 * 2 * 3);
        assert!(o.exact_reference);
        assert_eq!(o.significance.len(), 5);
        let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 24);
        for m in Metric::ALL {
            assert!(dir.path().join(format!("significance_{}.csv", m.name())).exists());
        }
    }

    #[test]
    fn single_algorithm_has_no_matrices() {
        let p = fixtures::toy_additive();
        let plan = BenchPlan {
            algorithms: vec![Algorithm::Spea2],
            budgets: vec![100],
            runs: 2,
            algo: AlgoConfig { population: 10, archive: 10, ..Default::default() },
            ..Default::default()
        };
        let o = bench(&p, &plan).map_err(|e| e.0).unwrap();
        assert!(o.significance.is_empty());
        assert_eq!(o.summary.len(), Metric::ALL.len());
    }

    #[test]
    fn summary_means_match_rows() {
        let p = fixtures::toy_additive();
        let plan = BenchPlan {
            algorithms: vec![Algorithm::Nsga2, Algorithm::Paes],
            budgets: vec![60],
            runs: 4,
            algo: AlgoConfig { population: 10, archive: 10, ..Default::default() },
            ..Default::default()
        };
        let o = bench(&p, &plan).map_err(|e| e.0).unwrap();
        for s in &o.summary {
            let v: Vec<f64> =
                o.runs.iter().filter(|r| r.algorithm == s.algorithm).map(|r| s.metric.of(&r.metrics)).collect();
            assert!((v.iter().sum::<f64>() / v.len() as f64 - s.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn pipeline_config_parses() {
        let c = PipelineConfig::from_toml("seed = 7\nfolds = 5\n[forest]\nn_trees = 10\n").unwrap();
        assert_eq!((c.seed, c.folds, c.forest.n_trees, c.min_class_count), (7, 5, 10, 4));
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }
}
