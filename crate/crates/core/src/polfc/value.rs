//! Two-stage comparison of open-loop and replanned (POLFC) control.
//!
//! The wind direction is unknown at the start and revealed at `t_mid`. The
//! open-loop value fixes a complete schedule up front; the POLFC value
//! commits the best open-loop plan, observes the realized branch at
//! `t_mid`, and replans the remainder. Both are computed by enumerating
//! every branch.

use std::collections::BTreeMap;
use std::time::Duration;

use super::{
    CandidateSource, ControlStrategy, ModelSetup, PlanningConfig, PlanningSession, PolfcError, ReplanTrigger,
    SelectionPolicy, Situation, StrategyId,
};
use crate::cost::CriteriaRegistry;
use crate::ensemble::{enumerate_factorial, EnsembleDesign, ForecastMember, UncertaintySpace, DEFAULT_DESIGN_CAP};
use crate::fusion::IgnitionBelief;
use crate::hazard::{simulate_final, ActionKind, ControlAction, FireState, ForcingSeries, ParameterVector, SpreadRuleVariant, WindField};
use crate::raster::{Cell, GridGeometry};
use crate::sched::ComputeBudget;

#[derive(Debug, Clone)]
pub struct TwoStageFixture {
    pub model: ModelSetup,
    pub initial: FireState,
    /// One scenario per wind branch.
    pub design: EnsembleDesign,
    pub t_mid: u32,
    /// Action sets starting at the initial step.
    pub first_stage: Vec<Vec<ControlAction>>,
    /// Action sets starting at `t_mid`.
    pub second_stage: Vec<Vec<ControlAction>>,
    pub weights: Vec<f64>,
    pub budget_eur: f64,
}

impl TwoStageFixture {
    /// Every first × second stage combination within budget. Ids follow
    /// the enumeration order `1 + i·|second| + j`; the empty combination is
    /// the null strategy and is left out.
    pub fn menu(&self) -> Vec<ControlStrategy> {
        let mut out = Vec::new();
        for (i, a) in self.first_stage.iter().enumerate() {
            for (j, b) in self.second_stage.iter().enumerate() {
                if a.is_empty() && b.is_empty() {
                    continue;
                }
                let id = StrategyId((1 + i * self.second_stage.len() + j) as u32);
                let s = ControlStrategy::new(id, format!("{i}/{j}"), a.iter().chain(b).cloned().collect());
                if s.total_resource_cost <= self.budget_eur {
                    out.push(s);
                }
            }
        }
        out
    }

    fn belief(&self) -> Result<IgnitionBelief, PolfcError> {
        Ok(IgnitionBelief::from_state(&self.initial)?)
    }

    fn scalar(&self, v: &crate::cost::CostVector) -> f64 {
        v.weighted_sum(&self.weights)
    }

    /// Best fixed schedule: `min_u Σ_b w_b · J(u, b)`.
    pub fn open_loop(&self) -> Result<(StrategyId, f64), PolfcError> {
        let belief = self.belief()?;
        let situation = Situation { model: &self.model, observed: &self.initial, belief: &belief };
        let mut best: Option<(StrategyId, f64)> = None;
        for s in std::iter::once(ControlStrategy::null()).chain(self.menu()) {
            let mut value = 0.0;
            for sc in &self.design.scenarios {
                value += sc.weight * self.scalar(&situation.scenario_cost(&s, sc)?);
            }
            if best.is_none_or(|(_, b)| value < b) {
                best = Some((s.id, value));
            }
        }
        Ok(best.expect("null strategy is always evaluated"))
    }

    /// Expected cost of planning, committing, observing the branch at
    /// `t_mid` and replanning, enumerated over the branches.
    pub fn polfc(&self) -> Result<f64, PolfcError> {
        let mut value = 0.0;
        for truth in &self.design.scenarios {
            let config = PlanningConfig {
                t_begin: self.initial.t(),
                budget_eur: self.budget_eur,
                candidates: CandidateSource::Menu { strategies: self.menu() },
                compute: ComputeBudget::new(Duration::from_secs(600), 1),
                min_coverage: 0.0,
                selection: Some(SelectionPolicy::WeightedSum { weights: self.weights.clone() }),
            };
            let mut session =
                PlanningSession::new(config, self.model.clone(), self.design.clone(), self.initial.clone(), self.belief()?)?;
            let first = session.replan(ReplanTrigger::Timer, &[], &[], 0.0, None)?.selected.expect("policy set");
            let committed = session.commit(first)?.clone();

            let forcing = &self.model.forcing[&truth.member];
            let params = self.model.scenario_params(truth)?;
            let executed: Vec<ControlAction> = committed.past(self.t_mid);
            let mid = simulate_final(
                &self.initial,
                forcing,
                &params,
                truth.variant,
                self.t_mid - self.initial.t(),
                &executed,
                truth.seed,
            )?
            .state;

            session.advance(mid.clone())?;
            let revealed = self.design.reweighted(|s| if s.member == truth.member { 1.0 } else { 0.0 })?;
            session.set_design(revealed)?;
            let plan = session.replan(ReplanTrigger::NewEvidence, &[], &[], 0.0, None)?;
            let second = plan.selected_strategy().expect("policy set").clone();

            let belief = session.belief().clone();
            let situation = Situation { model: &self.model, observed: &mid, belief: &belief };
            value += truth.weight * self.scalar(&situation.scenario_cost(&second, truth)?);
        }
        Ok(value)
    }

    /// Fire line burning in the middle of a 7 × 15 grid under calm air
    /// until `t_mid = 2`, then a strong wind for five steps. With
    /// `asymmetric` the two equally likely branches blow east and west;
    /// otherwise both blow east and observing the branch carries no
    /// information. One firebreak line (7 cells, 1 EUR each) fits the
    /// budget: east of the fire at column 9 or west at column 5, built at
    /// the start or at `t_mid`.
    pub fn wind_fork(asymmetric: bool) -> Result<Self, PolfcError> {
        let g = GridGeometry::new(7, 15, 100.0).map_err(crate::hazard::HazardError::from)?;
        let t_mid = 2;
        let t_end = 7;
        let base = ParameterVector::uniform_fuel(g, 0.1, 1.0, 20)?;
        let mut initial = FireState::from_fuel(&base.fuel);
        initial.ignite(&[Cell::new(2, 7), Cell::new(3, 7), Cell::new(4, 7)], 20)?;

        let branch = |u: f64| {
            let mut steps = vec![WindField::calm(); t_mid as usize];
            steps.extend(std::iter::repeat_n(WindField::Uniform { u, v: 0.0 }, (t_end - t_mid) as usize));
            ForcingSeries { steps }
        };
        let (a, b) = if asymmetric { (("east", 9.0), ("west", -9.0)) } else { (("east_a", 9.0), ("east_b", 9.0)) };
        let model = ModelSetup {
            base,
            forcing: BTreeMap::from([(a.0.to_string(), branch(a.1)), (b.0.to_string(), branch(b.1))]),
            asset_mask: None,
            criteria: CriteriaRegistry::standard(),
            t_end,
        };
        let space = UncertaintySpace {
            variants: vec![SpreadRuleVariant::DeterministicThreshold],
            members: vec![
                ForecastMember { id: a.0.into(), prior: 1.0 },
                ForecastMember { id: b.0.into(), prior: 1.0 },
            ],
            parameters: BTreeMap::new(),
        };
        let design = enumerate_factorial(&space, 1, 0, DEFAULT_DESIGN_CAP)?;
        let line = |col: usize, start: u32| ControlAction {
            kind: ActionKind::Firebreak { cells: (0..7).map(|r| Cell::new(r, col)).collect() },
            start_step: start,
            resource_cost: 7.0,
        };
        Ok(Self {
            model,
            initial,
            design,
            t_mid,
            first_stage: vec![vec![], vec![line(9, 0)], vec![line(5, 0)]],
            second_stage: vec![vec![], vec![line(9, t_mid)], vec![line(5, t_mid)]],
            weights: vec![1.0, 0.0, 0.01],
            budget_eur: 7.0,
        })
    }
}
