//! Data cleaning ahead of model fitting. The steps run in a fixed order:
//! constant columns, perfectly correlated columns, rare classes, then SMOTE
//! oversampling of the minority classes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed_constant: Vec<String>,
    /// `(kept, dropped)` name pairs.
    pub removed_correlated: Vec<(String, String)>,
    pub removed_classes: BTreeMap<i32, usize>,
}

impl PruneReport {
    pub fn merge(&mut self, other: PruneReport) {
        self.removed_constant.extend(other.removed_constant);
        self.removed_correlated.extend(other.removed_correlated);
        self.removed_classes.extend(other.removed_classes);
    }

    pub fn is_empty(&self) -> bool {
        self.removed_constant.is_empty() && self.removed_correlated.is_empty() && self.removed_classes.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for name in &self.removed_constant {
            let _ = writeln!(s, "{name}\tconstant column");
        }
        for (kept, dropped) in &self.removed_correlated {
            let _ = writeln!(s, "{dropped}\tperfectly correlated with {kept}");
        }
        for (class, count) in &self.removed_classes {
            let _ = writeln!(s, "class {class}\t{count} row(s), below minimum class size");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub values: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.names.len()
    }
}

fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Removes zero-variance columns.
pub fn drop_constant(ds: &Dataset) -> Result<(Dataset, PruneReport)> {
    let mut keep = Vec::new();
    let mut report = PruneReport::default();
    for j in 0..ds.n_cols() {
        if is_constant(&ds.column(j)) {
            report.removed_constant.push(ds.meta[j].name.clone());
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyDataset("every column is constant".into()));
    }
    Ok((ds.select_columns(&keep), report))
}

/// Pearson correlations between all indicator pairs.
pub fn correlation_matrix(ds: &Dataset) -> Result<CorrelationMatrix> {
    let p = ds.n_cols();
    let n = ds.n_rows() as f64;
    let centred: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let col = ds.column(j);
            let mean = col.iter().sum::<f64>() / n;
            col.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    for (j, c) in centred.iter().enumerate() {
        if is_constant(&ds.column(j)) || norms[j] == 0.0 || c.is_empty() {
            return Err(Error::DegenerateColumn(ds.meta[j].name.clone()));
        }
    }
    let rows = par::map_range(p, |i| {
        (0..p)
            .map(|j| {
                if i == j {
                    1.0
                } else {
                    let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
                    (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                }
            })
            .collect::<Vec<f64>>()
    });
    // Symmetrise exactly: floating sums are order-dependent only in the last bit.
    let mut values = rows;
    for i in 0..p {
        for j in (i + 1)..p {
            values[j][i] = values[i][j];
        }
    }
    Ok(CorrelationMatrix { values, names: ds.names() })
}

/// Drops the later column of every pair with |r| ≥ 1 − tol, keeping the
/// lower index, until no such pair remains.
pub fn drop_perfect_correlation(ds: &Dataset, tol: f64) -> Result<(Dataset, PruneReport)> {
    let mut current = ds.clone();
    let mut report = PruneReport::default();
    loop {
        let corr = correlation_matrix(&current)?;
        let p = current.n_cols();
        let mut dropped = vec![false; p];
        let mut changed = false;
        for i in 0..p {
            if dropped[i] {
                continue;
            }
            for j in (i + 1)..p {
                if !dropped[j] && corr.values[i][j].abs() >= 1.0 - tol {
                    dropped[j] = true;
                    changed = true;
                    report.removed_correlated.push((corr.names[i].clone(), corr.names[j].clone()));
                }
            }
        }
        if !changed {
            return Ok((current, report));
        }
        let keep: Vec<usize> = (0..p).filter(|&j| !dropped[j]).collect();
        current = current.select_columns(&keep);
    }
}

/// Removes every row whose class has fewer than `min_count` rows.
pub fn filter_rare_classes(ds: &Dataset, min_count: usize) -> Result<(Dataset, PruneReport)> {
    let by_class = ds.rows_by_class();
    let mut report = PruneReport::default();
    for (&c, rows) in &by_class {
        if rows.len() < min_count {
            report.removed_classes.insert(c, rows.len());
        }
    }
    let keep: Vec<usize> = (0..ds.n_rows())
        .filter(|i| !report.removed_classes.contains_key(&ds.classes[*i]))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset(format!("no class has at least {min_count} rows")));
    }
    Ok((ds.select_rows(&keep), report))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `rows`) of the `k` nearest other rows of `rows[i]`; ties are
/// broken by position.
pub(crate) fn nearest_neighbours(records: &[Vec<f64>], rows: &[usize], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|&(pos, _)| pos != i)
        .map(|(pos, &r)| (sq_dist(&records[rows[i]], &records[r]), pos))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, pos)| pos).collect()
}

/// Synthetic minority oversampling. Every class is topped up to the majority
/// count with points `x + g·(n − x)`, where `x` is an original row of that
/// class, `n` one of its `k` nearest same-class neighbours and `g ~ U[0,1)`.
/// Original rows keep their position; synthetic rows are appended per class
/// in ascending label order.
pub fn smote(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::Config("SMOTE needs k ≥ 1".into()));
    }
    let by_class = ds.rows_by_class();
    for (&class, rows) in &by_class {
        if rows.len() < 2 {
            return Err(Error::TooFewSamples { class, count: rows.len(), needed: 2 });
        }
    }
    let majority = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut out = ds.clone();
    for (ci, (&class, rows)) in by_class.iter().enumerate() {
        let needed = majority - rows.len();
        if needed == 0 {
            continue;
        }
        let kk = k.min(rows.len() - 1);
        let neighbours = par::map_range(rows.len(), |i| nearest_neighbours(&ds.records, rows, i, kk));
        let mut rng = ChaCha8Rng::seed_from_u64(par::derive_seed(seed, ci as u64));
        for s in 0..needed {
            // Cycle through the class rows so every row seeds about the same number of synthetics.
            let base = s % rows.len();
            let nb = neighbours[base][rng.random_range(0..kk)];
            let gap: f64 = rng.random();
            let x = &ds.records[rows[base]];
            let n = &ds.records[rows[nb]];
            out.records.push(x.iter().zip(n).map(|(a, b)| a + gap * (b - a)).collect());
            out.classes.push(class);
            out.ids.push(format!("smote-{class}-{s}"));
        }
    }
    Ok(out)
}
