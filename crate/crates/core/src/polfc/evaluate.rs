use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{ControlStrategy, PolfcError, StrategyId};
use crate::cost::{CostVector, CriteriaRegistry};
use crate::ensemble::{expectation, EnsembleDesign, Scenario, ScenarioId};
use crate::fusion::IgnitionBelief;
use crate::hazard::{simulate, simulate_final, FireState, ForcingSeries, ParameterVector, Trajectory};
use crate::sched::{estimate_partial, run_with_deadline, ComputeBudget, EvalTask, RunProgress, TaskId, TaskOutcome};

/// Static model inputs shared by every planning cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSetup {
    /// Fuel raster and default spread parameters; scenarios override
    /// `p0`, `cw` and `tau_burn` by name.
    pub base: ParameterVector,
    /// Wind forcing per forecast member, indexed by absolute step.
    pub forcing: BTreeMap<String, ForcingSeries>,
    #[serde(default)]
    pub asset_mask: Option<Vec<bool>>,
    #[serde(default)]
    pub criteria: CriteriaRegistry,
    pub t_end: u32,
}

impl ModelSetup {
    pub fn scenario_params(&self, scenario: &Scenario) -> Result<ParameterVector, PolfcError> {
        let mut p = self.base.clone();
        for (name, &v) in &scenario.parameters {
            match name.as_str() {
                "p0" => p.p0 = v,
                "cw" => p.cw = v,
                "tau_burn" => p.tau_burn = v.round().max(1.0) as u32,
                _ => return Err(PolfcError::UnknownParameter(name.clone())),
            }
        }
        Ok(p)
    }

    pub fn validate(&self, design: &EnsembleDesign) -> Result<(), PolfcError> {
        let g = self.base.fuel.geometry;
        if let Some(mask) = &self.asset_mask {
            if mask.len() != g.len() {
                return Err(PolfcError::InvalidCandidates(format!(
                    "asset mask has {} cells, grid has {}",
                    mask.len(),
                    g.len()
                )));
            }
        }
        for c in self.criteria.criteria() {
            if !matches!(c.key.as_str(), "burned_area" | "asset_cells" | "resource_cost") {
                return Err(PolfcError::UnknownCriterion(c.key.clone()));
            }
        }
        for s in &design.scenarios {
            let forcing = self.forcing.get(&s.member).ok_or_else(|| PolfcError::MissingForcing(s.member.clone()))?;
            forcing.validate(&g)?;
            self.scenario_params(s)?.validate()?;
        }
        Ok(())
    }

    /// End-state impacts, one entry per registered criterion.
    pub fn impacts(&self, final_state: &FireState, strategy: &ControlStrategy) -> CostVector {
        let g = final_state.geometry();
        let affected = final_state.cells().iter().filter(|c| c.is_affected());
        let burned = affected.clone().count();
        let assets = match &self.asset_mask {
            Some(mask) => final_state.cells().iter().zip(mask).filter(|(c, m)| c.is_affected() && **m).count(),
            None => 0,
        };
        let values = self
            .criteria
            .criteria()
            .iter()
            .map(|c| match c.key.as_str() {
                "burned_area" => burned as f64 * g.cellsize * g.cellsize / 1e4,
                "asset_cells" => assets as f64,
                _ => strategy.total_resource_cost,
            })
            .collect();
        CostVector::new(values)
    }
}

/// What is currently known: the observed fire state and the ignition belief.
#[derive(Debug, Clone, Copy)]
pub struct Situation<'a> {
    pub model: &'a ModelSetup,
    pub observed: &'a FireState,
    pub belief: &'a IgnitionBelief,
}

impl Situation<'_> {
    /// Scenario start state: the observed state, or when no fire has been
    /// observed yet, a single ignition drawn from the belief with the
    /// scenario's seed.
    pub fn initial_state(&self, scenario: &Scenario, params: &ParameterVector) -> Result<FireState, PolfcError> {
        if self.observed.cells().iter().any(|c| c.is_affected()) {
            return Ok(self.observed.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(u64::MAX);
        let u: f64 = rng.random();
        let g = *self.observed.geometry();
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, p) in self.belief.posterior().iter().enumerate() {
            if *p > 0.0 && self.observed.cells()[i] == crate::hazard::CellState::Fuel {
                acc += p;
                chosen = Some(g.cell(i));
                if u < acc {
                    break;
                }
            }
        }
        let mut state = self.observed.clone();
        if let Some(cell) = chosen {
            state.ignite(&[cell], params.tau_burn)?;
        }
        Ok(state)
    }

    /// Simulate `strategy` from the current step to `t_end` in `scenario`.
    /// Past actions are already part of the observed state; only the tail
    /// is applied.
    pub fn scenario_cost(&self, strategy: &ControlStrategy, scenario: &Scenario) -> Result<CostVector, PolfcError> {
        let (state0, inputs) = self.prepare(strategy, scenario)?;
        let horizon = self.model.t_end.saturating_sub(state0.t());
        let controls = tail_within(strategy, state0.t(), state0.t() + horizon);
        let last = simulate_final(&state0, inputs.0, &inputs.1, scenario.variant, horizon, &controls, scenario.seed)
            .map_err(|e| evaluation_error(strategy, scenario, e.into()))?;
        Ok(self.model.impacts(&last.state, strategy))
    }

    /// Every state of `strategy` in `scenario` from the current step, for
    /// `horizon` steps capped at `t_end`.
    pub fn trajectory(
        &self,
        strategy: &ControlStrategy,
        scenario: &Scenario,
        horizon: u32,
    ) -> Result<Trajectory, PolfcError> {
        let (state0, inputs) = self.prepare(strategy, scenario)?;
        let horizon = horizon.min(self.model.t_end.saturating_sub(state0.t()));
        let controls = tail_within(strategy, state0.t(), state0.t() + horizon);
        simulate(&state0, inputs.0, &inputs.1, scenario.variant, horizon, &controls, scenario.seed)
            .map_err(|e| evaluation_error(strategy, scenario, e.into()))
    }

    fn prepare(
        &self,
        strategy: &ControlStrategy,
        scenario: &Scenario,
    ) -> Result<(FireState, (&ForcingSeries, ParameterVector)), PolfcError> {
        let wrap = |e| evaluation_error(strategy, scenario, e);
        let params = self.model.scenario_params(scenario).map_err(wrap)?;
        let forcing =
            self.model.forcing.get(&scenario.member).ok_or_else(|| wrap(PolfcError::MissingForcing(scenario.member.clone())))?;
        let state0 = self.initial_state(scenario, &params).map_err(wrap)?;
        Ok((state0, (forcing, params)))
    }
}

fn evaluation_error(strategy: &ControlStrategy, scenario: &Scenario, e: PolfcError) -> PolfcError {
    PolfcError::Evaluation { strategy: strategy.id, scenario: scenario.id, message: e.to_string() }
}

/// Actions starting in `[t_now, until)`.
fn tail_within(strategy: &ControlStrategy, t_now: u32, until: u32) -> Vec<crate::hazard::ControlAction> {
    strategy.tail(t_now).into_iter().filter(|a| a.start_step < until).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub expected: CostVector,
    pub per_scenario: BTreeMap<ScenarioId, CostVector>,
    pub covered_fraction: f64,
    #[serde(default)]
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProvenance {
    pub design_id: String,
    pub design_seed: u64,
    pub belief_generation: u64,
    pub t_now: u32,
}

/// Evaluated candidates, keyed by strategy id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub criteria: Vec<String>,
    pub entries: BTreeMap<StrategyId, PlanEntry>,
    pub provenance: PlanProvenance,
}

fn provenance(situation: &Situation, design: &EnsembleDesign) -> PlanProvenance {
    PlanProvenance {
        design_id: design.design_id(),
        design_seed: design.seed,
        belief_generation: situation.belief.generation(),
        t_now: situation.observed.t(),
    }
}

fn criteria_keys(model: &ModelSetup) -> Vec<String> {
    model.criteria.criteria().iter().map(|c| c.key.clone()).collect()
}

/// Exact sequential evaluation of one strategy over every scenario.
pub fn evaluate_strategy(
    situation: &Situation,
    strategy: &ControlStrategy,
    design: &EnsembleDesign,
) -> Result<PlanEntry, PolfcError> {
    let per_scenario = design
        .scenarios
        .iter()
        .map(|s| Ok((s.id, situation.scenario_cost(strategy, s)?)))
        .collect::<Result<BTreeMap<_, _>, PolfcError>>()?;
    let e = expectation(&per_scenario, design)?;
    Ok(PlanEntry { expected: e.mean, per_scenario, covered_fraction: e.covered_fraction, low_confidence: false })
}

/// Evaluate every candidate on every scenario under the deadline executor.
///
/// Simulation failures are reported naming the (strategy, scenario) pair;
/// tasks skipped by the deadline or timed out simply reduce coverage.
pub fn evaluate_candidates(
    situation: &Situation,
    strategies: &[ControlStrategy],
    design: &EnsembleDesign,
    budget: &ComputeBudget,
    min_coverage: f64,
    observe: Option<&(dyn Fn(&RunProgress) + Sync)>,
) -> Result<(PlanResult, RunProgress), PolfcError> {
    situation.model.validate(design)?;
    let by_id: BTreeMap<StrategyId, &ControlStrategy> = strategies.iter().map(|s| (s.id, s)).collect();
    let cells = situation.observed.geometry().len() as u64;
    let steps = situation.model.t_end.saturating_sub(situation.observed.t()) as u64;
    let tasks: Vec<EvalTask> = strategies
        .iter()
        .flat_map(|st| {
            design.scenarios.iter().map(move |sc| EvalTask {
                id: TaskId { strategy: st.id, scenario: sc.id },
                weight: sc.weight,
                est_cost: cells * steps.max(1),
            })
        })
        .collect();
    let scenarios: BTreeMap<ScenarioId, &Scenario> = design.scenarios.iter().map(|s| (s.id, s)).collect();
    let run = run_with_deadline(
        &tasks,
        budget,
        |task| situation.scenario_cost(by_id[&task.id.strategy], scenarios[&task.id.scenario]).map_err(|e| e.to_string()),
        observe,
    )?;
    if let Some((id, TaskOutcome::Failed { message })) =
        run.results.iter().find(|(_, o)| matches!(o, TaskOutcome::Failed { .. }))
    {
        return Err(PolfcError::Evaluation { strategy: id.strategy, scenario: id.scenario, message: message.clone() });
    }
    // Strategies the deadline left without a single finished scenario are
    // absent from the result; the progress snapshot still lists them.
    let ids: Vec<StrategyId> = by_id
        .keys()
        .copied()
        .filter(|&s| run.results.iter().any(|(id, o)| id.strategy == s && o.value().is_some()))
        .collect();
    let estimates = estimate_partial(&run.results, design, &ids, min_coverage)?;
    let entries = estimates
        .into_iter()
        .map(|e| {
            (
                e.strategy,
                PlanEntry {
                    expected: e.expected,
                    per_scenario: e.per_scenario,
                    covered_fraction: e.covered_fraction,
                    low_confidence: e.low_confidence,
                },
            )
        })
        .collect();
    let result = PlanResult { criteria: criteria_keys(situation.model), entries, provenance: provenance(situation, design) };
    Ok((result, run.progress))
}

impl PlanResult {
    /// Assemble from exact per-strategy entries.
    pub fn from_entries(situation: &Situation, design: &EnsembleDesign, entries: BTreeMap<StrategyId, PlanEntry>) -> Self {
        Self { criteria: criteria_keys(situation.model), entries, provenance: provenance(situation, design) }
    }
}
