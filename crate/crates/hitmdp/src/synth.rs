//! Seeded random model instances for tests and benchmarks.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Action, MarkovControlModel, ModelParams};

/// Shape of the random instances produced by [`random_model`].
#[derive(Debug, Clone)]
pub struct RandomModelConfig {
    pub nontarget_states: usize,
    pub target_states: usize,
    pub actions: (usize, usize),
    pub discount: f64,
    /// Range of the per-row probability mass entering the target set. Kept
    /// strictly positive so every policy recovers almost surely.
    pub exit_mass: (f64, f64),
    pub cost_range: (f64, f64),
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        Self {
            nontarget_states: 4,
            target_states: 1,
            actions: (2, 3),
            discount: 0.9,
            exit_mass: (0.05, 0.25),
            cost_range: (0.1, 1.0),
        }
    }
}

/// Builds a valid random model, deterministically from the seed. Target
/// states sit at the top of the index range.
pub fn random_model(seed: u64, config: &RandomModelConfig) -> MarkovControlModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.nontarget_states;
    let k = config.target_states;
    let state_count = n + k;

    let mut actions = Vec::with_capacity(state_count);
    for _ in 0..n {
        let count = rng.random_range(config.actions.0..=config.actions.1);
        let mut acts = Vec::with_capacity(count);
        for ai in 0..count {
            let exit = rng.random_range(config.exit_mass.0..config.exit_mass.1);
            let mut split = |slots: usize, mass: f64| -> Vec<f64> {
                let raw: Vec<f64> = (0..slots).map(|_| rng.random_range(0.01..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|r| r / sum * mass).collect()
            };
            let inside = split(n, 1.0 - exit);
            let outside = split(k, exit);
            let mut row = inside;
            row.extend(outside);
            acts.push(Action {
                label: format!("a{ai}"),
                cost: rng.random_range(config.cost_range.0..config.cost_range.1),
                transition: row,
            });
        }
        actions.push(acts);
    }
    for _ in 0..k {
        actions.push(Vec::new());
    }

    MarkovControlModel::new(ModelParams {
        state_count,
        target_set: BTreeSet::from_iter(n..state_count),
        actions,
        discount: config.discount,
        in_target: None,
    })
    .expect("generated models are valid by construction")
}
