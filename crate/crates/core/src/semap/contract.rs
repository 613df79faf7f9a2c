use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::registry::Registry;
use super::{SemanticArray, SemapError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    #[default]
    Fatal,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Post,
    Invariant,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
            Phase::Invariant => "invariant",
        })
    }
}

/// A single semantic check: a named predicate applied to a list of slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub predicate: String,
    pub slots: Vec<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub args: Value,
    #[serde(default)]
    pub severity: Severity,
}

impl Check {
    pub fn new(id: &str, predicate: &str, slots: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            description: String::new(),
            predicate: predicate.to_string(),
            slots: slots.iter().map(|s| s.to_string()).collect(),
            args: Value::Null,
            severity: Severity::Fatal,
        }
    }

    pub fn args(mut self, args: Value) -> Self {
        self.args = args;
        self
    }

    pub fn warning(mut self) -> Self {
        self.severity = Severity::Warning;
        self
    }

    pub fn describe(mut self, d: &str) -> Self {
        self.description = d.to_string();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Contract {
    #[serde(default)]
    pub preconditions: Vec<Check>,
    #[serde(default)]
    pub postconditions: Vec<Check>,
    #[serde(default)]
    pub invariants: Vec<Check>,
}

impl Contract {
    pub fn checks(&self, phase: Phase) -> &[Check] {
        match phase {
            Phase::Pre => &self.preconditions,
            Phase::Post => &self.postconditions,
            Phase::Invariant => &self.invariants,
        }
    }

    pub fn all_checks(&self) -> impl Iterator<Item = (Phase, &Check)> {
        [Phase::Pre, Phase::Post, Phase::Invariant]
            .into_iter()
            .flat_map(move |p| self.checks(p).iter().map(move |c| (p, c)))
    }

    /// Check ids must be unique across all three phases.
    pub fn validate_ids(&self) -> Result<(), SemapError> {
        let mut seen = BTreeSet::new();
        for (_, c) in self.all_checks() {
            if !seen.insert(c.id.as_str()) {
                return Err(SemapError::DuplicateCheckId(c.id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub phase: Phase,
    pub severity: Severity,
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub phase: Phase,
    pub results: Vec<CheckResult>,
    pub fatal: bool,
}

impl CheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    pub fn first_fatal(&self) -> Option<&CheckResult> {
        self.results.iter().find(|r| !r.passed && r.severity == Severity::Fatal)
    }
}

/// Evaluate every check of `phase` against `bindings`.
///
/// A predicate that is not registered, or a check naming a slot absent from
/// `bindings`, is a configuration error and is returned as `Err`; a predicate
/// that evaluates to false is a failed check inside the report.
pub fn check_contract(
    contract: &Contract,
    registry: &Registry,
    bindings: &BTreeMap<String, SemanticArray>,
    phase: Phase,
) -> Result<CheckReport, SemapError> {
    let mut results = Vec::new();
    for check in contract.checks(phase) {
        let predicate = registry.predicate(&check.predicate).ok_or_else(|| SemapError::UnresolvedPredicate {
            check_id: check.id.clone(),
            predicate: check.predicate.clone(),
        })?;
        let arrays = check
            .slots
            .iter()
            .map(|s| {
                bindings.get(s).ok_or_else(|| SemapError::MissingSlot {
                    check_id: check.id.clone(),
                    slot: s.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let outcome = predicate(&arrays, &check.args);
        results.push(CheckResult {
            check_id: check.id.clone(),
            phase,
            severity: check.severity,
            passed: outcome.is_ok(),
            message: match outcome {
                Ok(()) => "ok".to_string(),
                Err(m) => m,
            },
        });
    }
    let fatal = results.iter().any(|r| !r.passed && r.severity == Severity::Fatal);
    Ok(CheckReport { phase, results, fatal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::Unit;
    use serde_json::json;

    fn bind(pairs: &[(&str, SemanticArray)]) -> BTreeMap<String, SemanticArray> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn empty_contract_is_vacuous() {
        let wind = SemanticArray::scalar(3.0, Unit::MeterPerSecond).unwrap();
        let report =
            check_contract(&Contract::default(), &Registry::builtin(), &bind(&[("wind", wind)]), Phase::Pre).unwrap();
        assert!(report.results.is_empty());
        assert!(!report.fatal);
    }

    #[test]
    fn units_precondition_passes_on_match() {
        let contract = Contract {
            preconditions: vec![Check::new("wind-units", "units_eq", &["wind"]).args(json!({"units": "m/s"}))],
            ..Default::default()
        };
        let wind = SemanticArray::grid(1, 2, Unit::MeterPerSecond, vec![1.0, 2.0]).unwrap();
        let report = check_contract(&contract, &Registry::builtin(), &bind(&[("wind", wind)]), Phase::Pre).unwrap();
        assert!(report.results[0].passed);
        assert!(!report.fatal);
    }

    #[test]
    fn negative_burned_area_fails_fatally() {
        let contract = Contract {
            postconditions: vec![Check::new("area-nonneg", "non_negative", &["burned_area"])],
            ..Default::default()
        };
        let area = SemanticArray::grid(1, 3, Unit::Hectare, vec![0.5, -1.0, 2.0]).unwrap();
        let report =
            check_contract(&contract, &Registry::builtin(), &bind(&[("burned_area", area)]), Phase::Post).unwrap();
        assert!(!report.results[0].passed);
        assert!(report.fatal);
        assert!(report.results[0].message.contains("-1"));
    }

    #[test]
    fn warnings_are_not_fatal() {
        let contract = Contract {
            postconditions: vec![Check::new("w", "non_negative", &["x"]).warning()],
            ..Default::default()
        };
        let x = SemanticArray::scalar(-1.0, Unit::Meter).unwrap();
        let report = check_contract(&contract, &Registry::builtin(), &bind(&[("x", x)]), Phase::Post).unwrap();
        assert_eq!(report.failures().count(), 1);
        assert!(!report.fatal);
    }

    #[test]
    fn unresolved_predicate_is_a_configuration_error() {
        let contract = Contract {
            invariants: vec![Check::new("c", "no_such_predicate", &["x"])],
            ..Default::default()
        };
        let x = SemanticArray::scalar(1.0, Unit::Meter).unwrap();
        let err = check_contract(&contract, &Registry::builtin(), &bind(&[("x", x)]), Phase::Invariant).unwrap_err();
        assert!(matches!(err, SemapError::UnresolvedPredicate { .. }));
    }

    #[test]
    fn missing_slot_is_a_configuration_error() {
        let contract = Contract {
            preconditions: vec![Check::new("c", "finite", &["absent"])],
            ..Default::default()
        };
        let err = check_contract(&contract, &Registry::builtin(), &BTreeMap::new(), Phase::Pre).unwrap_err();
        assert!(matches!(err, SemapError::MissingSlot { .. }));
    }

    #[test]
    fn duplicate_ids_across_phases_rejected() {
        let contract = Contract {
            preconditions: vec![Check::new("a", "finite", &["x"])],
            postconditions: vec![Check::new("a", "finite", &["y"])],
            ..Default::default()
        };
        assert!(matches!(contract.validate_ids(), Err(SemapError::DuplicateCheckId(_))));
    }
}
