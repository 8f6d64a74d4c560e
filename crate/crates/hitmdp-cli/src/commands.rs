//! The five subcommands. Each one builds a [`RunReport`], prints it, and
//! optionally writes the results table as CSV.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use hitmdp::modelfile::{load_model, LoadedModel};
use hitmdp::policy::{
    concatenate_recovery, evaluate_policy, recovery_bounds, rolling_horizon, EvalMethod,
};
use hitmdp::sim::{estimate_recovery_cost, monte_carlo, ControlLaw, SimulationConfig};
use hitmdp::solver::{value_iteration, SolverError, ValueIterationResult};
use hitmdp::weight::WeightCertificate;
use hitmdp::StationaryPolicy;

use crate::report::{num, RunReport, CENSORED};
use crate::{CliError, PolicySource, WeightChoice};

pub fn validate(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let started = Instant::now();
    let mut report = RunReport::new("validate");
    report.setting("model", path.display().to_string());

    match load_model(path) {
        Ok(loaded) => {
            report.setting("states", loaded.names.len().to_string());
            report.setting(
                "target_states",
                loaded.model.target_states().len().to_string(),
            );
            report.setting("discount", num(loaded.model.discount()));
            report.setting("result", "valid");
            if let Ok(cert) = WeightCertificate::unit(&loaded.model) {
                report.certificate(&cert);
            }
            report.headers = vec!["state".into(), "actions".into()];
            for rank in 0..loaded.model.nontarget_count() {
                let labels: Vec<&str> = loaded
                    .model
                    .actions(rank)
                    .iter()
                    .map(|a| a.label.as_str())
                    .collect();
                report.rows.push(vec![
                    loaded.state_name(loaded.model.state_of(rank)).to_string(),
                    labels.join(" "),
                ]);
            }
            report.wall = started.elapsed();
            report.print();
            write_out(&report, out)
        }
        Err(hitmdp::LoadError::Validation(invalid)) => {
            report.setting(
                "result",
                format!("invalid ({} violations)", invalid.0.len()),
            );
            report.headers = vec!["violation".into()];
            for violation in &invalid.0 {
                report.rows.push(vec![violation.to_string()]);
            }
            report.wall = started.elapsed();
            report.print();
            write_out(&report, out)?;
            Err(CliError::Validation(format!(
                "model has {} violation(s); state/action coordinates are indices into the file's lists",
                invalid.0.len()
            )))
        }
        Err(other) => Err(other.into()),
    }
}

fn certificate_for(
    loaded: &LoadedModel,
    choice: WeightChoice,
) -> Result<WeightCertificate, CliError> {
    let result = match choice {
        WeightChoice::Unit => WeightCertificate::unit(&loaded.model),
        WeightChoice::Model => {
            let weight = loaded.weight.clone().ok_or_else(|| {
                CliError::Validation("the model file carries no weight block".into())
            })?;
            WeightCertificate::with_weight(&loaded.model, weight)
        }
    };
    result.map_err(|e| CliError::Validation(e.to_string()))
}

pub fn solve(
    path: &Path,
    tol: f64,
    max_iter: usize,
    weight: WeightChoice,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_model(path)?;
    let cert = certificate_for(&loaded, weight)?;

    let (result, converged) = match value_iteration(&loaded.model, &cert, tol, max_iter) {
        Ok(result) => (result, true),
        Err(SolverError::NotConverged(partial)) => (*partial, false),
        Err(other) => return Err(CliError::Validation(other.to_string())),
    };

    let mut report = RunReport::new("solve");
    report.setting("model", path.display().to_string());
    report.setting("tolerance", num(tol));
    report.setting("max_iter", max_iter.to_string());
    report.setting("iterations", result.iterations.to_string());
    report.setting("sup_gap_bound", num(result.sup_gap_bound));
    report.setting("converged", converged.to_string());
    report.certificate(&cert);
    fill_value_table(&mut report, &loaded, &cert, &result);
    report.wall = started.elapsed();
    report.print();
    write_out(&report, out)?;

    if converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "certified bound {} still above tolerance {} after {} iterations",
            num(result.sup_gap_bound),
            num(tol),
            result.iterations
        )))
    }
}

fn fill_value_table(
    report: &mut RunReport,
    loaded: &LoadedModel,
    cert: &WeightCertificate,
    result: &ValueIterationResult,
) {
    report.headers = vec![
        "state".into(),
        "action".into(),
        "value".into(),
        "gap_bound".into(),
    ];
    for rank in 0..loaded.model.nontarget_count() {
        report.rows.push(vec![
            loaded.state_name(loaded.model.state_of(rank)).to_string(),
            loaded
                .model
                .action(rank, result.greedy.action(rank))
                .label
                .clone(),
            num(result.value.get(rank)),
            num(result.sup_gap_bound * cert.weight()[rank]),
        ]);
    }
}

pub fn rolling(
    path: &Path,
    (first, last): (usize, usize),
    tol: f64,
    weight: WeightChoice,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_model(path)?;
    let cert = certificate_for(&loaded, weight)?;
    let optimal = value_iteration(&loaded.model, &cert, tol, 1_000_000)
        .map_err(|e| CliError::NonConvergence(e.to_string()))?
        .greedy;

    let mut report = RunReport::new("rolling");
    report.setting("model", path.display().to_string());
    report.setting("horizons", format!("{first}..{last}"));
    report.setting("tolerance", num(tol));
    report.certificate(&cert);
    report.headers = vec![
        "horizon".into(),
        "state".into(),
        "action".into(),
        "vi_value".into(),
        "achieved_value".into(),
        "gap".into(),
        "bound".into(),
        "matches_optimal".into(),
    ];

    for horizon in first..=last {
        let rh = rolling_horizon(&loaded.model, horizon, &cert)?;
        let matches = rh.stationary_selector == optimal;
        for rank in 0..loaded.model.nontarget_count() {
            let gap = rh.achieved_value.get(rank) - rh.vi_value.get(rank);
            report.rows.push(vec![
                horizon.to_string(),
                loaded.state_name(loaded.model.state_of(rank)).to_string(),
                loaded
                    .model
                    .action(rank, rh.stationary_selector.action(rank))
                    .label
                    .clone(),
                num(rh.vi_value.get(rank)),
                num(rh.achieved_value.get(rank)),
                num(gap),
                num(rh.bound * cert.weight()[rank]),
                matches.to_string(),
            ]);
        }
    }
    report.wall = started.elapsed();
    report.print();
    write_out(&report, out)
}

/// A possibly-partial selector loaded from a policy file; total policies
/// produced by the solver arrive here with every slot filled.
struct FilePolicy {
    choices: Vec<Option<usize>>,
}

impl ControlLaw for FilePolicy {
    fn action(&self, rank: usize) -> Option<usize> {
        self.choices[rank]
    }
}

fn resolve_policy(
    loaded: &LoadedModel,
    source: &PolicySource,
    tol: f64,
) -> Result<(FilePolicy, String), CliError> {
    let total = |policy: &StationaryPolicy| FilePolicy {
        choices: policy.choices().iter().map(|&a| Some(a)).collect(),
    };
    match source {
        PolicySource::Optimal => {
            let cert = WeightCertificate::unit(&loaded.model)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let result = value_iteration(&loaded.model, &cert, tol, 1_000_000)
                .map_err(|e| CliError::NonConvergence(e.to_string()))?;
            Ok((total(&result.greedy), "optimal".into()))
        }
        PolicySource::Rolling(horizon) => {
            let cert = WeightCertificate::unit(&loaded.model)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let rh = rolling_horizon(&loaded.model, *horizon, &cert)?;
            Ok((total(&rh.stationary_selector), format!("rolling:{horizon}")))
        }
        PolicySource::File(path) => {
            let text = std::fs::read_to_string(path)?;
            let map: BTreeMap<String, String> =
                toml::from_str(&text).map_err(|e| CliError::Io(format!("policy file: {e}")))?;
            let mut choices = vec![None; loaded.model.nontarget_count()];
            for (state_name, action_name) in &map {
                let state = loaded.state_index(state_name).ok_or_else(|| {
                    CliError::Validation(format!("policy file names unknown state {state_name:?}"))
                })?;
                let rank = loaded.model.rank_of(state).ok_or_else(|| {
                    CliError::Validation(format!(
                        "policy file assigns an action to target state {state_name:?}"
                    ))
                })?;
                let action = loaded.action_index(rank, action_name).ok_or_else(|| {
                    CliError::Validation(format!(
                        "policy file names unknown action {action_name:?} at state {state_name:?}"
                    ))
                })?;
                choices[rank] = Some(action);
            }
            Ok((FilePolicy { choices }, format!("file:{}", path.display())))
        }
    }
}

fn resolve_state(
    loaded: &LoadedModel,
    name: Option<&str>,
    default: usize,
) -> Result<usize, CliError> {
    match name {
        None => Ok(default),
        Some(name) => loaded
            .state_index(name)
            .ok_or_else(|| CliError::Validation(format!("unknown state name {name:?}"))),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    path: &Path,
    source: &PolicySource,
    runs: usize,
    seed: u64,
    max_steps: usize,
    initial_state: Option<&str>,
    tol: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_model(path)?;
    let (law, description) = resolve_policy(&loaded, source, tol)?;
    let initial = resolve_state(&loaded, initial_state, loaded.model.nontarget_states()[0])?;
    let config = SimulationConfig {
        runs,
        max_steps,
        master_seed: seed,
        initial_state: initial,
    };
    let summary = monte_carlo(&loaded.model, &law, &config)?;

    let mut report = RunReport::new("simulate");
    report.setting("model", path.display().to_string());
    report.setting("policy", description.clone());
    report.setting("initial_state", loaded.state_name(initial));
    report.setting("runs", runs.to_string());
    report.setting("seed", seed.to_string());
    report.setting("max_steps", max_steps.to_string());
    if let Ok(cert) = WeightCertificate::unit(&loaded.model) {
        report.certificate(&cert);
    }
    report.headers = vec![
        "policy".into(),
        "initial_state".into(),
        "runs".into(),
        "seed".into(),
        "max_steps".into(),
        "cost_mean".into(),
        "cost_std".into(),
        "cost_stderr".into(),
        "hit_mean".into(),
        "hit_std".into(),
        "censored".into(),
    ];
    let hit_cell = |v: Option<f64>| v.map(num).unwrap_or_else(|| CENSORED.into());
    report.rows.push(vec![
        description,
        loaded.state_name(initial).to_string(),
        runs.to_string(),
        seed.to_string(),
        max_steps.to_string(),
        num(summary.cost_mean),
        num(summary.cost_std),
        num(summary.cost_stderr),
        hit_cell(summary.hit_mean),
        hit_cell(summary.hit_std),
        summary.censored.to_string(),
    ]);
    report.wall = started.elapsed();
    report.print();
    write_out(&report, out)
}

#[allow(clippy::too_many_arguments)]
pub fn recovery(
    path: &Path,
    runs: usize,
    excursions: usize,
    seed: u64,
    max_steps: usize,
    initial_state: Option<&str>,
    tol: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_model(path)?;
    let model = &loaded.model;
    let cert = WeightCertificate::unit(model).map_err(|e| CliError::Validation(e.to_string()))?;
    let result = value_iteration(model, &cert, tol, 1_000_000)
        .map_err(|e| CliError::NonConvergence(e.to_string()))?;
    let bounds = recovery_bounds(model, &result.value)?;
    let recovery_value = evaluate_policy(model, &result.greedy, EvalMethod::default_for(model))?;
    let total = concatenate_recovery(model, result.greedy)?;

    // The long-run average does not depend on the start; beginning inside
    // the target set also spares the estimate the initial transient.
    let initial = resolve_state(&loaded, initial_state, model.target_states()[0])?;
    let config = SimulationConfig {
        runs,
        max_steps,
        master_seed: seed,
        initial_state: initial,
    };
    let estimate = estimate_recovery_cost(model, &total, &config, excursions)?;

    let mut report = RunReport::new("recovery");
    report.setting("model", path.display().to_string());
    report.setting("initial_state", loaded.state_name(initial));
    report.setting("runs", runs.to_string());
    report.setting("excursions_per_run", excursions.to_string());
    report.setting("seed", seed.to_string());
    report.setting("max_steps", max_steps.to_string());
    report.setting("tolerance", num(tol));
    report.setting("recovery_policy_residual", num(recovery_value.residual));
    report.certificate(&cert);
    report.headers = vec![
        "beta_lower".into(),
        "beta_upper".into(),
        "estimate".into(),
        "half_width".into(),
        "runs".into(),
        "excursions_per_run".into(),
        "completed_excursions".into(),
        "shortfall".into(),
        "seed".into(),
    ];
    report.rows.push(vec![
        num(bounds.beta_lower),
        num(bounds.beta_upper),
        num(estimate.estimate),
        num(estimate.half_width),
        runs.to_string(),
        excursions.to_string(),
        estimate.completed_excursions.to_string(),
        estimate.shortfall.to_string(),
        seed.to_string(),
    ]);
    report.wall = started.elapsed();
    report.print();
    write_out(&report, out)
}

fn write_out(report: &RunReport, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = out {
        report.write_csv(path)?;
    }
    Ok(())
}
