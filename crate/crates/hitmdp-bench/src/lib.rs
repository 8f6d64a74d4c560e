//! Shared fixtures for the benchmark targets.

use hitmdp::modelfile::{load_model, LoadedModel};
use hitmdp::synth::{random_model, RandomModelConfig};
use hitmdp::MarkovControlModel;

/// A dense synthetic instance with `n` non-target states and three actions
/// per state.
pub fn sized_model(n: usize) -> MarkovControlModel {
    random_model(
        n as u64,
        &RandomModelConfig {
            nontarget_states: n,
            target_states: 1,
            actions: (3, 3),
            discount: 0.9,
            exit_mass: (0.02, 0.1),
            cost_range: (0.1, 1.0),
        },
    )
}

pub fn fishery() -> LoadedModel {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/fishery.model");
    load_model(path).expect("bundled fishery model loads")
}
