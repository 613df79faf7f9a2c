use serde::{Deserialize, Serialize};

use super::{
    evaluate_candidates, generate_candidates, pareto_filter, restrict_to_common_coverage, select, CandidateTemplates,
    ControlStrategy, Horizon, ModelSetup, ParetoFront, PlanResult, PolfcError, SelectionPolicy, Situation, StrategyId,
};
use crate::digest::json_digest;
use crate::ensemble::EnsembleDesign;
use crate::fusion::{update_belief, CitizenReport, IgnitionBelief, RemoteSensingObservation};
use crate::hazard::FireState;
use crate::sched::{ComputeBudget, RunProgress};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CandidateSource {
    /// Regenerate candidates from templates at every cycle.
    Templates(CandidateTemplates),
    /// Fixed menu of full-horizon strategies; at each cycle only those
    /// agreeing with the executed past remain. Ids must be non-zero.
    Menu { strategies: Vec<ControlStrategy> },
}

fn default_min_coverage() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub t_begin: u32,
    /// EUR, for the whole strategy including its executed past.
    pub budget_eur: f64,
    pub candidates: CandidateSource,
    pub compute: ComputeBudget,
    #[serde(default = "default_min_coverage")]
    pub min_coverage: f64,
    /// Applied automatically after each cycle; `None` leaves the choice to
    /// the operator.
    #[serde(default)]
    pub selection: Option<SelectionPolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReplanTrigger {
    NewEvidence,
    Timer,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub trigger: ReplanTrigger,
    pub horizon: Horizon,
    pub candidates: Vec<ControlStrategy>,
    pub result: PlanResult,
    pub front: ParetoFront,
    pub selected: Option<StrategyId>,
    pub progress: RunProgress,
}

impl Plan {
    pub fn strategy(&self, id: StrategyId) -> Option<&ControlStrategy> {
        self.candidates.iter().find(|s| s.id == id)
    }

    pub fn selected_strategy(&self) -> Option<&ControlStrategy> {
        self.selected.and_then(|id| self.strategy(id))
    }

    /// Digest of everything except timing.
    pub fn digest(&self) -> String {
        json_digest(&(&self.trigger, &self.horizon, &self.candidates, &self.result, &self.front, &self.selected))
    }
}

/// Single-writer planning state machine.
#[derive(Debug, Clone)]
pub struct PlanningSession {
    config: PlanningConfig,
    model: ModelSetup,
    design: EnsembleDesign,
    observed: FireState,
    belief: IgnitionBelief,
    committed: Option<ControlStrategy>,
    plan: Option<Plan>,
}

impl PlanningSession {
    pub fn new(
        config: PlanningConfig,
        model: ModelSetup,
        design: EnsembleDesign,
        observed: FireState,
        belief: IgnitionBelief,
    ) -> Result<Self, PolfcError> {
        Horizon::new(config.t_begin, observed.t(), model.t_end)?;
        if !(config.budget_eur >= 0.0 && config.budget_eur.is_finite()) {
            return Err(PolfcError::NegativeBudget(config.budget_eur));
        }
        config.compute.validate()?;
        if let CandidateSource::Menu { strategies } = &config.candidates {
            if strategies.iter().any(|s| s.id == StrategyId::NULL) {
                return Err(PolfcError::InvalidCandidates("menu ids must be non-zero; 0 is the null strategy".into()));
            }
        }
        if let CandidateSource::Templates(t) = &config.candidates {
            t.validate()?;
        }
        model.base.fuel.geometry.ensure_same(observed.geometry()).map_err(|e| PolfcError::Observation(e.to_string()))?;
        belief.geometry.ensure_same(observed.geometry()).map_err(|e| PolfcError::Observation(e.to_string()))?;
        model.validate(&design)?;
        Ok(Self { config, model, design, observed, belief, committed: None, plan: None })
    }

    pub fn horizon(&self) -> Horizon {
        Horizon { t_begin: self.config.t_begin, t_now: self.observed.t(), t_end: self.model.t_end }
    }

    pub fn config(&self) -> &PlanningConfig {
        &self.config
    }

    pub fn model(&self) -> &ModelSetup {
        &self.model
    }

    pub fn design(&self) -> &EnsembleDesign {
        &self.design
    }

    pub fn observed(&self) -> &FireState {
        &self.observed
    }

    pub fn belief(&self) -> &IgnitionBelief {
        &self.belief
    }

    pub fn committed(&self) -> Option<&ControlStrategy> {
        self.committed.as_ref()
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_ref()
    }

    pub fn set_design(&mut self, design: EnsembleDesign) -> Result<(), PolfcError> {
        self.model.validate(&design)?;
        self.design = design;
        Ok(())
    }

    pub fn set_belief(&mut self, belief: IgnitionBelief) -> Result<(), PolfcError> {
        belief.geometry.ensure_same(self.observed.geometry()).map_err(|e| PolfcError::Observation(e.to_string()))?;
        self.belief = belief;
        Ok(())
    }

    /// Move to a newer observed state.
    pub fn advance(&mut self, observed: FireState) -> Result<(), PolfcError> {
        observed.geometry().ensure_same(self.observed.geometry()).map_err(|e| PolfcError::Observation(e.to_string()))?;
        if observed.t() < self.observed.t() || observed.t() > self.model.t_end {
            return Err(PolfcError::Observation(format!(
                "step {} outside [{}, {}]",
                observed.t(),
                self.observed.t(),
                self.model.t_end
            )));
        }
        self.observed = observed;
        Ok(())
    }

    /// Install a plan computed elsewhere (e.g. on a copy of this session).
    pub fn adopt(&mut self, plan: Plan) -> Result<(), PolfcError> {
        if plan.horizon != self.horizon() {
            return Err(PolfcError::Observation(format!(
                "plan for step {} does not match the session at step {}",
                plan.horizon.t_now,
                self.observed.t()
            )));
        }
        self.plan = Some(plan);
        Ok(())
    }

    /// Commit a front member of the current plan.
    pub fn commit(&mut self, id: StrategyId) -> Result<&ControlStrategy, PolfcError> {
        let plan = self.plan.as_ref().ok_or(PolfcError::NoPlan)?;
        let strategy = plan.strategy(id).ok_or(PolfcError::UnknownStrategy(id))?;
        if !plan.front.contains(id) {
            return Err(PolfcError::NotOnFront { strategy: id, front: plan.front.members.clone() });
        }
        self.committed = Some(strategy.clone());
        Ok(self.committed.as_ref().expect("just set"))
    }

    /// Candidates for the remaining horizon, each prefixed with the
    /// executed past of the committed strategy.
    pub fn candidates(&self) -> Result<Vec<ControlStrategy>, PolfcError> {
        let t_now = self.observed.t();
        let past = self.committed.as_ref().map(|c| c.past(t_now)).unwrap_or_default();
        let past_cost: f64 = past.iter().map(|a| a.resource_cost).sum();
        let mut out = vec![ControlStrategy::new(StrategyId::NULL, "null", past.clone())];
        match &self.config.candidates {
            CandidateSource::Templates(templates) => {
                let remaining = (self.config.budget_eur - past_cost).max(0.0);
                for tail in generate_candidates(&self.observed, &self.belief, remaining, templates)? {
                    if tail.id != StrategyId::NULL {
                        let actions = past.iter().cloned().chain(tail.actions).collect();
                        out.push(ControlStrategy::new(tail.id, tail.label, actions));
                    }
                }
            }
            CandidateSource::Menu { strategies } => {
                out.extend(
                    strategies
                        .iter()
                        .filter(|s| s.past(t_now) == past && s.total_resource_cost <= self.config.budget_eur)
                        .cloned(),
                );
            }
        }
        Ok(out)
    }

    /// Run a full planning cycle: assimilate evidence, regenerate
    /// candidates, evaluate under the deadline, filter and select.
    pub fn replan(
        &mut self,
        trigger: ReplanTrigger,
        reports: &[CitizenReport],
        observations: &[RemoteSensingObservation],
        now: f64,
        observe: Option<&(dyn Fn(&RunProgress) + Sync)>,
    ) -> Result<&Plan, PolfcError> {
        let belief = update_belief(&self.belief, reports, observations, now)?;
        self.belief = belief;
        let candidates = self.candidates()?;
        let situation = Situation { model: &self.model, observed: &self.observed, belief: &self.belief };
        let (result, progress) = evaluate_candidates(
            &situation,
            &candidates,
            &self.design,
            &self.config.compute,
            self.config.min_coverage,
            observe,
        )?;
        let result = restrict_to_common_coverage(&result, &self.design)?;
        let front = pareto_filter(&result)?;
        let selected = match &self.config.selection {
            Some(policy) => Some(select(&front, &result, policy)?),
            None => None,
        };
        self.plan = Some(Plan { trigger, horizon: self.horizon(), candidates, result, front, selected, progress });
        Ok(self.plan.as_ref().expect("just set"))
    }
}
