//! The playable model: an action catalog, per-neighbourhood session state,
//! and action application scored by the frozen forest.
//!
//! Action deltas are fractions of the session's *baseline* indicator values,
//! so applying an action twice adds the same absolute increment twice.
//! Indicators never drop below zero.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::first_component_loadings;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::preprocess::correlation_matrix;

pub const DEFAULT_DELTA: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Direct,
    Indirect,
}

/// An indicator named either by feature index or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndicatorRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub indicator: IndicatorRef,
    pub delta_fraction: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionFile {
    id: String,
    name: String,
    kind: ActionKind,
    targets: Vec<TargetSpec>,
    #[serde(default = "one")]
    cost_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: String,
    pub name: String,
    pub kind: ActionKind,
    /// `(feature index, delta fraction of the baseline value)`.
    pub targets: Vec<(usize, f64)>,
    pub cost_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCatalog {
    pub actions: Vec<ActionSpec>,
}

impl ActionCatalog {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.id == id)
    }

    /// Checks the catalog invariants against a feature space of `n_features`.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.actions.is_empty() {
            return Err(Error::Format("catalog has no actions".into()));
        }
        let mut seen = HashSet::new();
        for a in &self.actions {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::Format(format!("duplicate action id `{}`", a.id)));
            }
            match (a.kind, a.targets.len()) {
                (ActionKind::Direct, 1) => {}
                (ActionKind::Indirect, n) if n >= 2 => {}
                (kind, n) => {
                    return Err(Error::Format(format!("{kind:?} action `{}` has {n} target(s)", a.id)));
                }
            }
            if a.cost_turns == 0 {
                return Err(Error::Format(format!("action `{}` costs zero turns", a.id)));
            }
            for &(k, d) in &a.targets {
                if k >= n_features {
                    return Err(Error::Reference(format!("action `{}` targets indicator {k}", a.id)));
                }
                if !d.is_finite() {
                    return Err(Error::Format(format!("action `{}` has a non-finite delta", a.id)));
                }
            }
        }
        Ok(())
    }

    /// Parses the catalog JSON array, resolving indicator names against
    /// `feature_names`.
    pub fn from_json(text: &str, feature_names: &[String]) -> Result<Self> {
        let raw: Vec<ActionFile> = serde_json::from_str(text).map_err(|e| Error::Format(format!("catalog: {e}")))?;
        let mut actions = Vec::with_capacity(raw.len());
        for a in raw {
            let targets = a
                .targets
                .into_iter()
                .map(|t| {
                    let k = match t.indicator {
                        IndicatorRef::Index(k) => k,
                        IndicatorRef::Name(n) => feature_names
                            .iter()
                            .position(|f| *f == n)
                            .ok_or_else(|| Error::Reference(format!("action `{}` names unknown indicator `{n}`", a.id)))?,
                    };
                    Ok((k, t.delta_fraction))
                })
                .collect::<Result<Vec<_>>>()?;
            actions.push(ActionSpec { id: a.id, name: a.name, kind: a.kind, targets, cost_turns: a.cost_turns });
        }
        let catalog = ActionCatalog { actions };
        catalog.validate(feature_names.len())?;
        Ok(catalog)
    }

    /// Serialises to the catalog file format with indicators written by name.
    pub fn to_json(&self, feature_names: &[String]) -> Result<String> {
        let raw: Vec<ActionFile> = self
            .actions
            .iter()
            .map(|a| ActionFile {
                id: a.id.clone(),
                name: a.name.clone(),
                kind: a.kind,
                targets: a
                    .targets
                    .iter()
                    .map(|&(k, d)| TargetSpec {
                        indicator: feature_names.get(k).map_or(IndicatorRef::Index(k), |n| IndicatorRef::Name(n.clone())),
                        delta_fraction: d,
                    })
                    .collect(),
                cost_turns: a.cost_turns,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&raw)?)
    }
}

pub fn load_catalog(path: impl AsRef<Path>, feature_names: &[String]) -> Result<ActionCatalog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ActionCatalog::from_json(&text, feature_names)
}

pub fn save_catalog(c: &ActionCatalog, feature_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, c.to_json(feature_names)?).map_err(|e| Error::io(path, e))
}

/// Builds the standard 12-action catalog (11 direct, 1 indirect) for a
/// trained forest. Direct actions push the 11 most important indicators in
/// the direction of their correlation with the class; the indirect action
/// moves the three indicators loading highest on the first principal
/// component of the remaining ones, scaled by their loadings.
pub fn derive_catalog(ds: &Dataset, forest: &Forest) -> Result<ActionCatalog> {
    let p = ds.n_cols();
    if p != forest.n_features {
        return Err(Error::Shape { expected: forest.n_features, got: p });
    }
    if p < 3 {
        return Err(Error::Config("catalog derivation needs at least 3 indicators".into()));
    }
    let class: Vec<f64> = ds.classes.iter().map(|&c| c as f64).collect();
    let sign: Vec<f64> = (0..p).map(|k| if pearson(&ds.column(k), &class) < 0.0 { -1.0 } else { 1.0 }).collect();

    let imp = forest.feature_importance();
    let mut ranked: Vec<usize> = (0..p).collect();
    ranked.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    let n_direct = 11.min(p - 2);

    let mut actions = Vec::with_capacity(n_direct + 1);
    for (i, &k) in ranked[..n_direct].iter().enumerate() {
        let verb = if sign[k] > 0.0 { "Increase" } else { "Reduce" };
        actions.push(ActionSpec {
            id: format!("a{:02}", i + 1),
            name: format!("{verb} {}", ds.meta[k].name),
            kind: ActionKind::Direct,
            targets: vec![(k, DEFAULT_DELTA * sign[k])],
            cost_turns: 1,
        });
    }

    let rest: Vec<usize> = ranked[n_direct..].to_vec();
    let sub = ds.select_columns(&rest);
    let loadings = first_component_loadings(&correlation_matrix(&sub)?)?;
    let mut by_loading: Vec<usize> = (0..rest.len()).collect();
    by_loading.sort_by(|&a, &b| loadings[b].abs().total_cmp(&loadings[a].abs()).then(a.cmp(&b)));
    let picked: Vec<usize> = by_loading.into_iter().take(3).collect();
    let max_abs = picked.iter().map(|&i| loadings[i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut targets: Vec<(usize, f64)> = picked.iter().map(|&i| (rest[i], DEFAULT_DELTA * loadings[i] / max_abs)).collect();
    if targets.iter().map(|&(k, d)| d * sign[k]).sum::<f64>() < 0.0 {
        targets.iter_mut().for_each(|t| t.1 = -t.1);
    }
    targets.sort_by_key(|t| t.0);
    actions.push(ActionSpec {
        id: format!("a{:02}", n_direct + 1),
        name: "Neighbourhood programme".into(),
        kind: ActionKind::Indirect,
        targets,
        cost_turns: 1,
    });
    let catalog = ActionCatalog { actions };
    catalog.validate(p)?;
    Ok(catalog)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Bit vector selecting catalog actions.
pub type Genome = Vec<bool>;

pub fn genome_to_string(g: &[bool]) -> String {
    g.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn genome_from_str(s: &str) -> Result<Genome> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Format(format!("genome contains `{other}`"))),
        })
        .collect()
}

/// Adds one action's deltas to `current`, anchored at `baseline`.
pub(crate) fn apply_deltas(current: &mut [f64], baseline: &[f64], action: &ActionSpec) {
    for &(k, d) in &action.targets {
        current[k] = (current[k] + d * baseline[k]).max(0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Snapshot {
    current: Vec<f64>,
    turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub neighbourhood_id: String,
    pub baseline: Vec<f64>,
    pub current: Vec<f64>,
    pub turns: usize,
    pub history: Vec<String>,
    pub score: f64,
    #[serde(default)]
    snapshots: Vec<Snapshot>,
}

impl SessionState {
    pub fn new(neighbourhood_id: impl Into<String>, baseline: Vec<f64>, forest: &Forest) -> Result<Self> {
        let score = forest.predict(&baseline)?;
        Ok(SessionState {
            neighbourhood_id: neighbourhood_id.into(),
            current: baseline.clone(),
            baseline,
            turns: 0,
            history: Vec::new(),
            score,
            snapshots: Vec::new(),
        })
    }

    /// Starts a session from a dataset row, matching columns to the forest's
    /// features by name.
    pub fn from_dataset(ds: &Dataset, id: &str, forest: &Forest) -> Result<Self> {
        let row = ds.row_index(id).ok_or_else(|| Error::Reference(format!("neighbourhood `{id}`")))?;
        let baseline = forest
            .feature_names
            .iter()
            .map(|n| {
                ds.column_index(n)
                    .map(|j| ds.records[row][j])
                    .ok_or_else(|| Error::Reference(format!("indicator `{n}` missing from dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        SessionState::new(id, baseline, forest)
    }

    pub fn apply(&mut self, action: &ActionSpec, forest: &Forest) -> Result<()> {
        self.push(action);
        self.rescore(forest)
    }

    fn push(&mut self, action: &ActionSpec) {
        self.snapshots.push(Snapshot { current: self.current.clone(), turns: self.turns });
        apply_deltas(&mut self.current, &self.baseline, action);
        self.turns += action.cost_turns;
        self.history.push(action.id.clone());
    }

    fn rescore(&mut self, forest: &Forest) -> Result<()> {
        self.score = forest.predict(&self.current)?;
        Ok(())
    }

    /// Applies every action whose bit is set, once each, in catalog order.
    pub fn apply_plan(&mut self, genome: &[bool], catalog: &ActionCatalog, forest: &Forest) -> Result<()> {
        if genome.len() != catalog.len() {
            return Err(Error::Shape { expected: catalog.len(), got: genome.len() });
        }
        for (a, _) in catalog.actions.iter().zip(genome).filter(|(_, &b)| b) {
            self.push(a);
        }
        self.rescore(forest)
    }

    /// Restores the state before the last action.
    pub fn undo(&mut self, forest: &Forest) -> Result<()> {
        let snap = self.snapshots.pop().ok_or(Error::NothingToUndo)?;
        self.current = snap.current;
        self.turns = snap.turns;
        self.history.pop();
        self.rescore(forest)
    }

    pub fn evaluate(&self, forest: &Forest) -> Result<f64> {
        forest.predict(&self.current)
    }
}

pub fn apply_action(s: &SessionState, a: &ActionSpec, f: &Forest) -> Result<SessionState> {
    let mut next = s.clone();
    next.apply(a, f)?;
    Ok(next)
}

pub fn apply_plan(s: &SessionState, genome: &[bool], catalog: &ActionCatalog, f: &Forest) -> Result<SessionState> {
    let mut next = s.clone();
    next.apply_plan(genome, catalog, f)?;
    Ok(next)
}

pub fn undo(s: &SessionState, f: &Forest) -> Result<SessionState> {
    let mut next = s.clone();
    next.undo(f)?;
    Ok(next)
}

pub fn evaluate(s: &SessionState, f: &Forest) -> Result<f64> {
    s.evaluate(f)
}
