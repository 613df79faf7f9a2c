use serde::{Deserialize, Serialize};
use std::fmt;

use crate::hazard::ControlAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyId(pub u32);

impl StrategyId {
    pub const NULL: StrategyId = StrategyId(0);
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// A schedule of control actions over the planning horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlStrategy {
    pub id: StrategyId,
    pub label: String,
    pub actions: Vec<ControlAction>,
    /// EUR; always the sum of the action costs.
    pub total_resource_cost: f64,
}

impl ControlStrategy {
    pub fn new(id: StrategyId, label: impl Into<String>, actions: Vec<ControlAction>) -> Self {
        let total_resource_cost = actions.iter().map(|a| a.resource_cost).sum();
        Self { id, label: label.into(), actions, total_resource_cost }
    }

    pub fn null() -> Self {
        Self::new(StrategyId::NULL, "null", Vec::new())
    }

    pub fn is_null(&self) -> bool {
        self.actions.is_empty()
    }

    /// Actions starting at or after `t_now`.
    pub fn tail(&self, t_now: u32) -> Vec<ControlAction> {
        self.actions.iter().filter(|a| a.start_step >= t_now).cloned().collect()
    }

    /// Actions strictly before `t_now`: the executed past.
    pub fn past(&self, t_now: u32) -> Vec<ControlAction> {
        self.actions.iter().filter(|a| a.start_step < t_now).cloned().collect()
    }
}
