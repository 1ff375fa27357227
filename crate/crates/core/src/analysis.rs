//! Feature-analysis diagnostics: sampling adequacy (KMO), principal-component
//! communalities, and the contribution-weighted indicator groups used for the
//! five display gauges.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Group};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::par;
use crate::preprocess::CorrelationMatrix;

const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmoReport {
    pub value: f64,
    /// True when the correlation matrix had to be regularised with 1e-8·I.
    pub ridge_applied: bool,
}

fn to_matrix(c: &CorrelationMatrix) -> DMatrix<f64> {
    let p = c.dim();
    DMatrix::from_fn(p, p, |i, j| c.values[i][j])
}

fn check_symmetric(c: &CorrelationMatrix) -> Result<()> {
    let p = c.dim();
    if c.values.len() != p || c.values.iter().any(|r| r.len() != p) {
        return Err(Error::Format("correlation matrix is not square".into()));
    }
    for i in 0..p {
        for j in 0..i {
            if (c.values[i][j] - c.values[j][i]).abs() > 1e-12 {
                return Err(Error::Format(format!("correlation matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Kaiser–Meyer–Olkin measure over the anti-image partial correlations.
pub fn kmo(c: &CorrelationMatrix) -> Result<KmoReport> {
    check_symmetric(c)?;
    let p = c.dim();
    let r = to_matrix(c);
    let mut ridge_applied = false;
    let inv = match r.clone().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) && r.determinant().abs() > 1e-12 => inv,
        _ => {
            ridge_applied = true;
            (r.clone() + DMatrix::identity(p, p) * RIDGE)
                .try_inverse()
                .ok_or_else(|| Error::Undefined("correlation matrix is singular".into()))?
        }
    };
    let (mut r2, mut p2) = (0.0, 0.0);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            r2 += r[(i, j)] * r[(i, j)];
            let partial = -inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]).sqrt();
            p2 += partial * partial;
        }
    }
    if r2 == 0.0 {
        return Err(Error::Undefined("no shared variance between variables".into()));
    }
    Ok(KmoReport { value: r2 / (r2 + p2), ridge_applied })
}

/// Eigenpairs sorted by descending eigenvalue; equal eigenvalues keep the
/// solver's column order.
fn sorted_eigen(c: &CorrelationMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(to_matrix(c));
    let mut order: Vec<usize> = (0..c.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(c.dim(), c.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Principal-component communalities with `n_factors` retained components.
pub fn communalities(c: &CorrelationMatrix, n_factors: usize) -> Result<Vec<f64>> {
    check_symmetric(c)?;
    let p = c.dim();
    if n_factors == 0 || n_factors > p {
        return Err(Error::Config(format!("n_factors {n_factors} outside 1..={p}")));
    }
    let (values, vectors) = sorted_eigen(c);
    Ok((0..p)
        .map(|i| (0..n_factors).map(|j| vectors[(i, j)].powi(2) * values[j].max(0.0)).sum())
        .collect())
}

/// First principal-component loadings (eigenvector × √eigenvalue), sign
/// fixed so that the loadings sum is non-negative.
pub fn first_component_loadings(c: &CorrelationMatrix) -> Result<Vec<f64>> {
    check_symmetric(c)?;
    let (values, vectors) = sorted_eigen(c);
    let scale = values.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let mut l: Vec<f64> = (0..c.dim()).map(|i| vectors[(i, 0)] * scale).collect();
    if l.iter().sum::<f64>() < 0.0 {
        l.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeights {
    /// `(indicator index, weight)` per display group; weights sum to 1.
    pub groups: BTreeMap<Group, Vec<(usize, f64)>>,
    /// Groups whose indicators all had zero contribution and fell back to
    /// uniform weights.
    #[serde(default)]
    pub uniform_fallback: Vec<Group>,
}

/// Weights every grouped indicator by its mean absolute contribution over the
/// dataset rows, normalised within the group. Indicators in `Group::None`
/// are left out.
pub fn group_weights(f: &Forest, ds: &Dataset, groups: &BTreeMap<usize, Group>) -> Result<GroupWeights> {
    if ds.n_cols() != f.n_features {
        return Err(Error::Shape { expected: f.n_features, got: ds.n_cols() });
    }
    if let Some(k) = (0..f.n_features).find(|k| !groups.contains_key(k)) {
        return Err(Error::Reference(format!("indicator {k} has no group")));
    }
    let rows = par::map_slice(&ds.records, |x| f.decompose(x).map(|d| d.contributions));
    let mut mean_abs = vec![0.0; f.n_features];
    for r in rows {
        for (m, c) in mean_abs.iter_mut().zip(r?) {
            *m += c.abs();
        }
    }
    let n = ds.n_rows().max(1) as f64;
    mean_abs.iter_mut().for_each(|m| *m /= n);
    Ok(weights_from_magnitudes(&mean_abs, groups))
}

pub(crate) fn weights_from_magnitudes(magnitudes: &[f64], groups: &BTreeMap<usize, Group>) -> GroupWeights {
    let mut members: BTreeMap<Group, Vec<usize>> = BTreeMap::new();
    for (&k, &g) in groups {
        if g != Group::None {
            members.entry(g).or_default().push(k);
        }
    }
    let mut out = GroupWeights { groups: BTreeMap::new(), uniform_fallback: Vec::new() };
    for (g, idx) in members {
        let total: f64 = idx.iter().map(|&k| magnitudes[k]).sum();
        let weights = if total > 0.0 {
            idx.iter().map(|&k| (k, magnitudes[k] / total)).collect()
        } else {
            out.uniform_fallback.push(g);
            idx.iter().map(|&k| (k, 1.0 / idx.len() as f64)).collect()
        };
        out.groups.insert(g, weights);
    }
    out
}

/// Baseline-relative group score: Σ weight·(x / baseline), so the baseline
/// state scores 1.0 in every group.
pub fn group_scores(x: &[f64], gw: &GroupWeights, baselines: &[f64]) -> Result<BTreeMap<Group, f64>> {
    let mut out = BTreeMap::new();
    for (&g, members) in &gw.groups {
        let mut s = 0.0;
        for &(k, w) in members {
            let (Some(&xk), Some(&bk)) = (x.get(k), baselines.get(k)) else {
                return Err(Error::Shape { expected: k + 1, got: x.len().min(baselines.len()) });
            };
            if !(bk > 0.0) {
                return Err(Error::Baseline(k));
            }
            s += w * xk / bk;
        }
        out.insert(g, s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightEntry {
    indicator: String,
    weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupWeightsFile {
    groups: BTreeMap<Group, Vec<WeightEntry>>,
    #[serde(default)]
    uniform_fallback: Vec<Group>,
}

impl GroupWeights {
    /// JSON with indicators named rather than indexed.
    pub fn to_json(&self, feature_names: &[String]) -> Result<String> {
        let file = GroupWeightsFile {
            groups: self
                .groups
                .iter()
                .map(|(&g, m)| {
                    (g, m.iter().map(|&(k, weight)| WeightEntry { indicator: feature_names[k].clone(), weight }).collect())
                })
                .collect(),
            uniform_fallback: self.uniform_fallback.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str, feature_names: &[String]) -> Result<GroupWeights> {
        let file: GroupWeightsFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let mut groups = BTreeMap::new();
        for (g, entries) in file.groups {
            let members = entries
                .into_iter()
                .map(|e| {
                    feature_names
                        .iter()
                        .position(|n| *n == e.indicator)
                        .map(|k| (k, e.weight))
                        .ok_or_else(|| Error::Reference(format!("unknown indicator `{}`", e.indicator)))
                })
                .collect::<Result<Vec<_>>>()?;
            groups.insert(g, members);
        }
        Ok(GroupWeights { groups, uniform_fallback: file.uniform_fallback })
    }
}

pub fn save_group_weights(gw: &GroupWeights, feature_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, gw.to_json(feature_names)?).map_err(|e| Error::io(path, e))
}

pub fn load_group_weights(path: impl AsRef<Path>, feature_names: &[String]) -> Result<GroupWeights> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GroupWeights::from_json(&text, feature_names)
}
