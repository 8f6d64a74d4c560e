//! The on-disk model schema and its loader.
//!
//! Models are TOML documents with named states; indices exist only in
//! memory. The schema:
//!
//! ```toml
//! schema_version = 1
//! discount = 0.9
//! states = ["1", "2", "3", "4"]     # ordered, unique
//! target = ["4"]
//!
//! [base_cost]                        # optional per-state cost component
//! 1 = 300.0
//!
//! [[action]]                         # one block per (state, action)
//! state = "1"
//! name = "harvest"
//! action_cost = -20.0                # + base_cost, or use `cost = <total>`
//! row = { 1 = 1.0 }                  # omitted successors have mass zero
//!
//! [in_target_dynamics."4"]           # optional, one per target state
//! action = "sustain"
//! row = { 1 = 0.1, 2 = 0.3, 3 = 0.6 }
//!
//! [weight]                           # optional, per non-target state
//! 1 = 1.0
//! ```
//!
//! Stage costs are given either as a total (`cost`) or decomposed as
//! `base_cost[state] + action_cost`; the resolved total must be
//! nonnegative. Action order within a state follows file order and fixes
//! the tie-breaking order of the solver. The loader resolves names,
//! enforces every model invariant, and renormalizes rows within the row-sum
//! tolerance; loading, saving, and re-loading a file yields a
//! value-identical model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, InvalidModel, MarkovControlModel, ModelParams, TargetDynamics};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot access model file: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed document: TOML syntax or an unresolved/inconsistent
    /// reference. The message names the offending reference.
    #[error("malformed model file: {0}")]
    Parse(String),
    /// Structurally sound document describing an invalid model.
    #[error(transparent)]
    Validation(#[from] InvalidModel),
}

/// One `[[action]]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEntry {
    pub state: String,
    pub name: String,
    /// Total stage cost. Mutually exclusive with `action_cost`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    /// Action component added to the state's `base_cost`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_cost: Option<f64>,
    /// Transition probabilities keyed by successor state name.
    pub row: BTreeMap<String, f64>,
}

/// One `[in_target_dynamics.<state>]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InTargetEntry {
    pub action: String,
    pub row: BTreeMap<String, f64>,
}

/// The raw document, one-to-one with the TOML surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub discount: f64,
    pub states: Vec<String>,
    pub target: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub base_cost: BTreeMap<String, f64>,
    #[serde(rename = "action")]
    pub actions: Vec<ActionEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub in_target_dynamics: BTreeMap<String, InTargetEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weight: BTreeMap<String, f64>,
}

/// A validated model together with the naming and weight data of its file.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: MarkovControlModel,
    /// State names in index order.
    pub names: Vec<String>,
    /// Weight vector over the non-target states (rank-indexed), when the
    /// file carries one.
    pub weight: Option<Vec<f64>>,
    /// The document as parsed; [`save_model`] writes it back verbatim.
    pub file: ModelFile,
}

impl LoadedModel {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn state_name(&self, index: usize) -> &str {
        &self.names[index]
    }

    /// Index of the named action at a non-target state.
    pub fn action_index(&self, rank: usize, name: &str) -> Option<usize> {
        self.model
            .actions(rank)
            .iter()
            .position(|a| a.label == name)
    }
}

/// Reads and validates a model document from disk.
pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel, LoadError> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<LoadedModel, LoadError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
    resolve(file)
}

/// Writes a document back to disk.
pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<(), LoadError> {
    std::fs::write(path, to_toml_string(file))?;
    Ok(())
}

pub fn to_toml_string(file: &ModelFile) -> String {
    toml::to_string_pretty(file).expect("model documents serialize infallibly")
}

fn resolve(file: ModelFile) -> Result<LoadedModel, LoadError> {
    let parse = |msg: String| LoadError::Parse(msg);

    if file.schema_version != SCHEMA_VERSION {
        return Err(parse(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let mut index = BTreeMap::new();
    for (i, name) in file.states.iter().enumerate() {
        if index.insert(name.as_str(), i).is_some() {
            return Err(parse(format!("duplicate state name {name:?}")));
        }
    }
    let lookup = |name: &str, context: &str| -> Result<usize, LoadError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| parse(format!("unknown state name {name:?} in {context}")))
    };

    let mut target_set = BTreeSet::new();
    for name in &file.target {
        target_set.insert(lookup(name, "the target list")?);
    }
    for name in file.base_cost.keys() {
        lookup(name, "base_cost")?;
    }

    let state_count = file.states.len();
    let dense_row = |row: &BTreeMap<String, f64>, context: &str| -> Result<Vec<f64>, LoadError> {
        let mut out = vec![0.0; state_count];
        for (name, &p) in row {
            out[lookup(name, context)?] = p;
        }
        Ok(out)
    };

    let mut actions: Vec<Vec<Action>> = vec![Vec::new(); state_count];
    for entry in &file.actions {
        let context = format!("action {:?} of state {:?}", entry.name, entry.state);
        let state = lookup(&entry.state, &context)?;
        let cost = match (entry.cost, entry.action_cost) {
            (Some(total), None) => total,
            (None, Some(part)) => {
                let base = file.base_cost.get(&entry.state).ok_or_else(|| {
                    parse(format!(
                        "{context} uses action_cost but state {:?} has no base_cost",
                        entry.state
                    ))
                })?;
                base + part
            }
            (Some(_), Some(_)) => {
                return Err(parse(format!("{context} gives both cost and action_cost")))
            }
            (None, None) => {
                return Err(parse(format!(
                    "{context} gives neither cost nor action_cost"
                )))
            }
        };
        actions[state].push(Action {
            label: entry.name.clone(),
            cost,
            transition: dense_row(&entry.row, &context)?,
        });
    }

    let in_target = if file.in_target_dynamics.is_empty() {
        None
    } else {
        let mut map = BTreeMap::new();
        for (name, entry) in &file.in_target_dynamics {
            let context = format!("in_target_dynamics of state {name:?}");
            map.insert(
                lookup(name, &context)?,
                TargetDynamics {
                    label: entry.action.clone(),
                    transition: dense_row(&entry.row, &context)?,
                },
            );
        }
        Some(map)
    };

    let params = ModelParams {
        state_count,
        target_set,
        actions,
        discount: file.discount,
        in_target,
    };
    let model = MarkovControlModel::new(params)?;

    let weight = if file.weight.is_empty() {
        None
    } else {
        let mut w = vec![f64::NAN; model.nontarget_count()];
        for (name, &value) in &file.weight {
            let state = lookup(name, "weight")?;
            let rank = model
                .rank_of(state)
                .ok_or_else(|| parse(format!("weight given for target state {name:?}")))?;
            w[rank] = value;
        }
        if let Some(missing) = w.iter().position(|x| x.is_nan()) {
            return Err(parse(format!(
                "weight missing for state {:?}",
                file.states[model.state_of(missing)]
            )));
        }
        Some(w)
    };

    Ok(LoadedModel {
        names: file.states.clone(),
        weight,
        model,
        file,
    })
}

/// Re-extracts raw parameters from a built model (rows come back
/// renormalized).
pub fn model_to_params(model: &MarkovControlModel) -> ModelParams {
    let mut actions = vec![Vec::new(); model.state_count()];
    for rank in 0..model.nontarget_count() {
        actions[model.state_of(rank)] = model.actions(rank).to_vec();
    }
    let in_target = model.in_target().map(|dyns| {
        model
            .target_states()
            .iter()
            .copied()
            .zip(dyns.iter().cloned())
            .collect()
    });
    ModelParams {
        state_count: model.state_count(),
        target_set: model.target_states().iter().copied().collect(),
        actions,
        discount: model.discount(),
        in_target,
    }
}

/// Renders a built model as a document, with totals for costs and sparse
/// rows. `names` supplies the state names, index-aligned.
pub fn file_from_model(model: &MarkovControlModel, names: &[String]) -> ModelFile {
    assert_eq!(names.len(), model.state_count());
    let sparse = |row: &[f64]| -> BTreeMap<String, f64> {
        row.iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(i, &p)| (names[i].clone(), p))
            .collect()
    };
    let mut actions = Vec::new();
    for rank in 0..model.nontarget_count() {
        let state = model.state_of(rank);
        for action in model.actions(rank) {
            actions.push(ActionEntry {
                state: names[state].clone(),
                name: action.label.clone(),
                cost: Some(action.cost),
                action_cost: None,
                row: sparse(&action.transition),
            });
        }
    }
    let in_target_dynamics = model
        .in_target()
        .map(|dyns| {
            model
                .target_states()
                .iter()
                .zip(dyns)
                .map(|(&t, d)| {
                    (
                        names[t].clone(),
                        InTargetEntry {
                            action: d.label.clone(),
                            row: sparse(&d.transition),
                        },
                    )
                })
                .collect()
        })
        .unwrap_or_default();

    ModelFile {
        schema_version: SCHEMA_VERSION,
        discount: model.discount(),
        states: names.to_vec(),
        target: model
            .target_states()
            .iter()
            .map(|&t| names[t].clone())
            .collect(),
        base_cost: BTreeMap::new(),
        actions,
        in_target_dynamics,
        weight: BTreeMap::new(),
    }
}
