use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{PlanEntry, PlanResult, PolfcError, StrategyId};
use crate::ensemble::{expectation, EnsembleDesign, ScenarioId};

/// Nondominated strategies in id order, plus every dominance relation
/// `(dominator, dominated)` among the evaluated strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<StrategyId>,
    pub dominance: Vec<(StrategyId, StrategyId)>,
}

impl ParetoFront {
    pub fn contains(&self, id: StrategyId) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

/// Recompute every entry's expectation over the scenarios covered by all
/// strategies, so the entries become comparable.
pub fn restrict_to_common_coverage(result: &PlanResult, design: &EnsembleDesign) -> Result<PlanResult, PolfcError> {
    let mut common: Option<BTreeSet<ScenarioId>> = None;
    for e in result.entries.values() {
        let keys: BTreeSet<ScenarioId> = e.per_scenario.keys().copied().collect();
        common = Some(match common {
            None => keys,
            Some(c) => c.intersection(&keys).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    let mut entries = BTreeMap::new();
    for (id, e) in &result.entries {
        let per_scenario: BTreeMap<ScenarioId, _> =
            e.per_scenario.iter().filter(|(s, _)| common.contains(s)).map(|(s, v)| (*s, v.clone())).collect();
        let x = expectation(&per_scenario, design)?;
        entries.insert(
            *id,
            PlanEntry {
                expected: x.mean,
                per_scenario,
                covered_fraction: x.covered_fraction,
                low_confidence: e.low_confidence,
            },
        );
    }
    Ok(PlanResult { entries, ..result.clone() })
}

/// Nondominated set of the expected cost vectors.
pub fn pareto_filter(result: &PlanResult) -> Result<ParetoFront, PolfcError> {
    let mut coverage = result.entries.values().map(|e| e.per_scenario.keys().collect::<Vec<_>>());
    if let Some(first) = coverage.next() {
        if coverage.any(|c| c != first) {
            return Err(PolfcError::MixedCoverage);
        }
    }
    let entries: Vec<(StrategyId, &PlanEntry)> = result.entries.iter().map(|(k, v)| (*k, v)).collect();
    let mut dominance = Vec::new();
    let mut dominated = BTreeSet::new();
    for (a, ea) in &entries {
        for (b, eb) in &entries {
            if ea.expected.dominates(&eb.expected) {
                dominance.push((*a, *b));
                dominated.insert(*b);
            }
        }
    }
    let members = entries.iter().map(|(id, _)| *id).filter(|id| !dominated.contains(id)).collect();
    Ok(ParetoFront { members, dominance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Minimize `Σ_k w_k · C_k`; ties go to the smallest id.
    WeightedSum { weights: Vec<f64> },
    /// Compare criteria in the given order (criterion keys).
    Lexicographic { order: Vec<String> },
    /// Explicit choice by the operator; must name a front member.
    OperatorPick { strategy: StrategyId },
}

/// Apply `policy` to the front members of `result`.
pub fn select(front: &ParetoFront, result: &PlanResult, policy: &SelectionPolicy) -> Result<StrategyId, PolfcError> {
    if front.members.is_empty() {
        return Err(PolfcError::EmptyFront);
    }
    let entry = |id: &StrategyId| result.entries.get(id).ok_or(PolfcError::UnknownStrategy(*id));
    let n = result.criteria.len();
    match policy {
        SelectionPolicy::WeightedSum { weights } => {
            if weights.len() != n || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(PolfcError::InvalidPolicy(format!("need {n} finite non-negative weights")));
            }
            let mut best: Option<(StrategyId, f64)> = None;
            for id in &front.members {
                let v = entry(id)?.expected.weighted_sum(weights);
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((*id, v));
                }
            }
            Ok(best.expect("front is non-empty").0)
        }
        SelectionPolicy::Lexicographic { order } => {
            let idx = order
                .iter()
                .map(|k| {
                    result
                        .criteria
                        .iter()
                        .position(|c| c == k)
                        .ok_or_else(|| PolfcError::InvalidPolicy(format!("unknown criterion {k}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut best = front.members[0];
            for id in &front.members[1..] {
                let (a, b) = (entry(id)?.expected.values(), entry(&best)?.expected.values());
                let ord = idx.iter().map(|&k| a[k].total_cmp(&b[k])).find(|o| o.is_ne());
                if ord == Some(std::cmp::Ordering::Less) {
                    best = *id;
                }
            }
            Ok(best)
        }
        SelectionPolicy::OperatorPick { strategy } => {
            if front.contains(*strategy) {
                Ok(*strategy)
            } else if result.entries.contains_key(strategy) {
                Err(PolfcError::NotOnFront { strategy: *strategy, front: front.members.clone() })
            } else {
                Err(PolfcError::UnknownStrategy(*strategy))
            }
        }
    }
}
