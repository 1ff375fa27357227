//! Request and response bodies.

use std::collections::BTreeMap;

use maasim_core::dataset::Group;
use maasim_core::moo::Algorithm;
use maasim_core::simcore::ActionKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub neighbourhood_id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayAction {
    pub action_id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplyPlan {
    /// One character per catalog action, `1` selects it.
    pub genome: String,
}

fn default_evaluations() -> usize {
    10_000
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Optimize {
    pub algorithm: Algorithm,
    #[serde(default = "default_evaluations")]
    pub evaluations: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Health {
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TargetView {
    pub indicator: String,
    pub delta_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ActionView {
    pub id: String,
    pub name: String,
    pub kind: ActionKind,
    pub targets: Vec<TargetView>,
    pub cost_turns: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NeighbourhoodView {
    pub id: String,
    pub score: f64,
    pub class: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndicatorView {
    pub name: String,
    pub group: Group,
    pub value: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateView {
    pub neighbourhood_id: String,
    pub score: f64,
    pub class: i32,
    pub turns: usize,
    pub history: Vec<String>,
    pub groups: BTreeMap<Group, f64>,
    pub indicators: Vec<IndicatorView>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionView {
    pub session_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub state: StateView,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Solution {
    pub genome: String,
    pub action_ids: Vec<String>,
    pub score: f64,
    pub turns: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptimizeResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub evaluations: usize,
    pub solutions: Vec<Solution>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub error: String,
}
