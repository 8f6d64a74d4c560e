//! Shared fixtures for the unit tests. The four-level fishery model is
//! transcribed here independently of the bundled model file; the I/O tests
//! assert the two agree.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Action, MarkovControlModel, ModelParams, TargetDynamics};

/// Raw parameters of the fishery management model: four population levels,
/// the highest is the target; five actions per lower level.
pub fn fishery_params() -> ModelParams {
    let labels = [
        "harvest",
        "harvest-less",
        "do-nothing",
        "import",
        "import-less",
    ];
    let rows = [
        // Per action: rows for population levels 1..3.
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.7, 0.3, 0.0, 0.0],
            [0.1, 0.6, 0.3, 0.0],
        ],
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.35, 0.65, 0.0, 0.0],
            [0.04, 0.5, 0.46, 0.0],
        ],
        [
            [0.99, 0.01, 0.0, 0.0],
            [0.01, 0.7, 0.28, 0.01],
            [0.0, 0.03, 0.65, 0.32],
        ],
        [
            [0.4, 0.6, 0.0, 0.0],
            [0.0, 0.3, 0.65, 0.05],
            [0.0, 0.0, 0.25, 0.75],
        ],
        [
            [0.6, 0.4, 0.0, 0.0],
            [0.0, 0.45, 0.54, 0.01],
            [0.0, 0.0, 0.45, 0.55],
        ],
    ];
    let base_cost = [300.0, 150.0, 100.0];
    let action_cost = [
        [-20.0, -10.0, 0.0, 150.0, 75.0],
        [-40.0, -20.0, 0.0, 150.0, 75.0],
        [-80.0, -40.0, 0.0, 150.0, 75.0],
    ];

    let mut actions = Vec::new();
    for state in 0..3 {
        let acts = (0..5)
            .map(|a| Action {
                label: labels[a].to_string(),
                cost: base_cost[state] + action_cost[state][a],
                transition: rows[a][state].to_vec(),
            })
            .collect();
        actions.push(acts);
    }
    actions.push(Vec::new());

    ModelParams {
        state_count: 4,
        target_set: BTreeSet::from([3]),
        actions,
        discount: 0.9,
        in_target: None,
    }
}

pub fn fishery() -> MarkovControlModel {
    MarkovControlModel::new(fishery_params()).unwrap()
}

/// Fishery model augmented with a synthetic in-target row that always drops
/// back below the target level, enabling the recovery-cost analysis.
pub fn fishery_with_recovery() -> MarkovControlModel {
    let mut params = fishery_params();
    params.in_target = Some(BTreeMap::from([(
        3,
        TargetDynamics {
            label: "sustain".into(),
            transition: vec![0.1, 0.3, 0.6, 0.0],
        },
    )]));
    MarkovControlModel::new(params).unwrap()
}

/// Two states, the second is the target. One action at the first state that
/// stays with probability `stay` and otherwise hits the target.
pub fn single_chain(stay: f64, cost: f64, discount: f64) -> MarkovControlModel {
    MarkovControlModel::new(ModelParams {
        state_count: 2,
        target_set: BTreeSet::from([1]),
        actions: vec![
            vec![Action {
                label: "step".into(),
                cost,
                transition: vec![stay, 1.0 - stay],
            }],
            vec![],
        ],
        discount,
        in_target: None,
    })
    .unwrap()
}
