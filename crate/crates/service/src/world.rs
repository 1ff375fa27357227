use std::collections::BTreeMap;

use maasim_core::analysis::{group_weights, load_group_weights, GroupWeights};
use maasim_core::dataset::{load_dataset, load_schema, Dataset, Group, IndicatorMeta};
use maasim_core::fixtures;
use maasim_core::forest::{load_model, Forest};
use maasim_core::simcore::{load_catalog, ActionCatalog};
use maasim_core::{Error, Result};

use crate::config::ServiceConfig;

/// Immutable data shared by every session.
#[derive(Debug, Clone)]
pub struct World {
    pub forest: Forest,
    /// Neighbourhood rows, columns in model feature order.
    pub dataset: Dataset,
    pub catalog: ActionCatalog,
    pub groups: GroupWeights,
}

impl World {
    /// Restricts the dataset to the model's features and checks the catalog.
    pub fn new(forest: Forest, dataset: &Dataset, catalog: ActionCatalog, groups: Option<GroupWeights>) -> Result<Self> {
        let dataset = dataset.select_named(&forest.feature_names)?;
        catalog.validate(forest.n_features)?;
        let groups = match groups {
            Some(g) => g,
            None => {
                let by_index: BTreeMap<usize, Group> = dataset.meta.iter().map(|m| (m.index, m.group)).collect();
                group_weights(&forest, &dataset, &by_index)?
            }
        };
        if dataset.n_rows() == 0 {
            return Err(Error::EmptyDataset("no neighbourhoods".into()));
        }
        Ok(World { forest, dataset, catalog, groups })
    }

    pub fn load(cfg: &ServiceConfig) -> Result<Self> {
        let forest = load_model(&cfg.model_path)?;
        let mut dataset = load_dataset(&cfg.dataset_path)?;
        if let Some(p) = &cfg.schema_path {
            dataset.apply_schema(&load_schema(p)?)?;
        }
        let catalog = load_catalog(&cfg.catalog_path, &forest.feature_names)?;
        let groups = match &cfg.groups_path {
            Some(p) => Some(load_group_weights(p, &forest.feature_names)?),
            None => None,
        };
        World::new(forest, &dataset, catalog, groups)
    }

    /// Twelve-action world over seeded synthetic neighbourhoods.
    pub fn demo(seed: u64) -> Result<Self> {
        let fx = fixtures::action_fixture(seed)?;
        World::new(fx.forest, &fx.dataset, fx.catalog, None)
    }

    /// Two-action world with the known front {(3.5, 1), (3.6, 2)} from
    /// neighbourhood `toy`.
    pub fn toy() -> Result<Self> {
        let t = fixtures::toy()?;
        let meta = [("facilities", Group::Services), ("greenery", Group::Environment)]
            .iter()
            .enumerate()
            .map(|(index, &(name, group))| IndicatorMeta { index, name: name.into(), group, unit: String::new() })
            .collect();
        let ds = Dataset::new(
            vec![t.session.baseline.clone(), vec![11.0, 11.0]],
            vec![3, 4],
            meta,
            vec!["toy".into(), "rich".into()],
        )?;
        World::new(t.forest, &ds, t.catalog, None)
    }

    pub fn group_of(&self, k: usize) -> Group {
        self.groups.groups.iter().find(|(_, m)| m.iter().any(|&(i, _)| i == k)).map_or(Group::None, |(&g, _)| g)
    }
}
