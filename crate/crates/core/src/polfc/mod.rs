//! Partial-open-loop feedback control over the scenario ensemble.
//!
//! A planning cycle generates candidate strategies, evaluates each one's
//! cost vector on every scenario under the urgent executor, keeps the
//! Pareto front and applies an explicit selection policy. When new
//! information arrives the cycle is re-run from the observed state with the
//! already executed part of the committed strategy fixed as past.

mod candidates;
mod evaluate;
mod pareto;
mod session;
mod strategy;
pub mod value;

pub use candidates::{generate_candidates, CandidateTemplates, Side};
pub use evaluate::{evaluate_candidates, evaluate_strategy, ModelSetup, PlanEntry, PlanProvenance, PlanResult, Situation};
pub use pareto::{pareto_filter, restrict_to_common_coverage, select, ParetoFront, SelectionPolicy};
pub use session::{CandidateSource, Plan, PlanningConfig, PlanningSession, ReplanTrigger};
pub use strategy::{ControlStrategy, StrategyId};

use serde::{Deserialize, Serialize};

use crate::cost::CostError;
use crate::ensemble::{EnsembleError, ScenarioId};
use crate::fusion::FusionError;
use crate::hazard::HazardError;
use crate::sched::SchedError;

/// Planning time window in step indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub t_begin: u32,
    pub t_now: u32,
    pub t_end: u32,
}

impl Horizon {
    pub fn new(t_begin: u32, t_now: u32, t_end: u32) -> Result<Self, PolfcError> {
        if t_begin <= t_now && t_now <= t_end {
            Ok(Self { t_begin, t_now, t_end })
        } else {
            Err(PolfcError::InvalidHorizon(format!("need {t_begin} <= {t_now} <= {t_end}")))
        }
    }

    pub fn remaining(&self) -> u32 {
        self.t_end - self.t_now
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolfcError {
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error("candidate templates produce no strategy besides the null strategy")]
    EmptyTemplates,
    #[error("invalid candidate configuration: {0}")]
    InvalidCandidates(String),
    #[error("budget {0} EUR must be finite and >= 0")]
    NegativeBudget(f64),
    #[error("strategy {strategy}, scenario {scenario}: {message}")]
    Evaluation { strategy: StrategyId, scenario: ScenarioId, message: String },
    #[error("no forcing series for forecast member {0}")]
    MissingForcing(String),
    #[error("unknown scenario parameter {0}")]
    UnknownParameter(String),
    #[error("no impact model for criterion {0}")]
    UnknownCriterion(String),
    #[error("strategies cover different scenario subsets; restrict to the common coverage first")]
    MixedCoverage,
    #[error("nothing to select from")]
    EmptyFront,
    #[error("invalid selection policy: {0}")]
    InvalidPolicy(String),
    #[error("strategy {strategy} is not on the Pareto front {}", fmt_ids(.front))]
    NotOnFront { strategy: StrategyId, front: Vec<StrategyId> },
    #[error("unknown strategy {0}")]
    UnknownStrategy(StrategyId),
    #[error("no plan has been computed")]
    NoPlan,
    #[error("inconsistent observation: {0}")]
    Observation(String),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

fn fmt_ids(ids: &[StrategyId]) -> String {
    let parts: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(", "))
}
