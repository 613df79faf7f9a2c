use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use super::contract::{check_contract, CheckResult, Phase, Severity};
use super::graph::{Feed, Pipeline, SlotRef};
use super::registry::TransformInput;
use super::{SemanticArray, SemapError};
use crate::digest::Hasher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Halt at the first fatal check failure.
    Enforce,
    /// Run every module and collect all failures.
    Audit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub module_id: String,
    pub variant_tag: String,
    pub input_digests: BTreeMap<String, String>,
    pub output_digests: BTreeMap<String, String>,
    pub checks: Vec<CheckResult>,
    #[serde(with = "micros")]
    pub wall_time: Duration,
}

mod micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_micros)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProvenanceTrace {
    pub records: Vec<ProvenanceRecord>,
}

impl ProvenanceTrace {
    pub fn executed(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.module_id.as_str()).collect()
    }

    /// Digest over everything except wall times.
    pub fn digest(&self) -> String {
        let mut h = Hasher::new();
        for r in &self.records {
            h.str(&r.module_id).str(&r.variant_tag);
            for (k, v) in r.input_digests.iter().chain(&r.output_digests) {
                h.str(k).str(v);
            }
            for c in &r.checks {
                h.str(&c.check_id).u64(c.passed as u64);
            }
        }
        h.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckFailure {
    pub module_id: String,
    pub check_id: String,
    pub phase: Phase,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub outputs: BTreeMap<String, SemanticArray>,
    pub trace: ProvenanceTrace,
    pub failures: Vec<CheckFailure>,
}

impl PipelineRun {
    pub fn fatal_failures(&self) -> impl Iterator<Item = &CheckFailure> {
        self.failures.iter().filter(|f| f.severity == Severity::Fatal)
    }
}

/// Execute a composed pipeline.
///
/// Source bindings must cover every source and satisfy its signature. Each
/// module's preconditions are checked on its inputs, its transform runs, and
/// postconditions and invariants are checked on inputs and outputs together.
/// Module outputs are also checked against their declared signatures; a
/// violation there is attributed to the producing module.
pub fn run_pipeline(
    pipeline: &Pipeline,
    inputs: &BTreeMap<String, SemanticArray>,
    mode: RunMode,
) -> Result<PipelineRun, SemapError> {
    for (name, sig) in &pipeline.sources {
        let a = inputs.get(name).ok_or_else(|| SemapError::MissingInput(name.clone()))?;
        if let Some(why) = sig.mismatch(a) {
            return Err(SemapError::InputSignature { source_name: name.clone(), message: why });
        }
    }
    if let Some(extra) = inputs.keys().find(|k| !pipeline.sources.contains_key(*k)) {
        return Err(SemapError::UnknownInput(extra.clone()));
    }

    let mut produced: BTreeMap<SlotRef, SemanticArray> = BTreeMap::new();
    let mut trace = ProvenanceTrace::default();
    let mut failures = Vec::new();

    for step in &pipeline.steps {
        let m = &step.module;
        let started = Instant::now();
        let mut bindings: BTreeMap<String, SemanticArray> = step
            .feeds
            .iter()
            .map(|(slot, feed)| {
                let a = match feed {
                    Feed::Source(name) => &inputs[name],
                    Feed::Edge(r) => &produced[r],
                };
                (slot.clone(), a.clone())
            })
            .collect();
        let input_digests: BTreeMap<String, String> =
            bindings.iter().map(|(k, v)| (k.clone(), v.digest())).collect();

        let pre = check_contract(&m.contract, &pipeline.registry, &bindings, Phase::Pre)?;
        collect(&mut failures, &m.id, &pre.results);
        if mode == RunMode::Enforce {
            if let Some(f) = pre.first_fatal() {
                return Err(violation(&m.id, f, trace));
            }
        }

        let outcome = catch_unwind(AssertUnwindSafe(|| {
            (step.transform)(&TransformInput {
                module_id: &m.id,
                inputs: &bindings,
                outputs: &m.outputs,
                params: &m.params,
            })
        }));
        let outputs = match outcome {
            Ok(Ok(o)) => o,
            Ok(Err(message)) => return Err(SemapError::ModuleExecution { module: m.id.clone(), message }),
            Err(panic) => {
                let message = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "transform panicked".to_string());
                return Err(SemapError::ModuleExecution { module: m.id.clone(), message: format!("panic: {message}") });
            }
        };
        for (slot, sig) in &m.outputs {
            let a = outputs.get(slot).ok_or_else(|| SemapError::ModuleExecution {
                module: m.id.clone(),
                message: format!("transform did not produce output slot {slot}"),
            })?;
            if let Some(why) = sig.mismatch(a) {
                return Err(SemapError::ModuleExecution {
                    module: m.id.clone(),
                    message: format!("output slot {slot}: {why}"),
                });
            }
        }
        if let Some(extra) = outputs.keys().find(|k| !m.outputs.contains_key(*k)) {
            return Err(SemapError::ModuleExecution {
                module: m.id.clone(),
                message: format!("transform produced undeclared slot {extra}"),
            });
        }

        let output_digests = outputs.iter().map(|(k, v)| (k.clone(), v.digest())).collect();
        bindings.extend(outputs.iter().map(|(k, v)| (k.clone(), v.clone())));
        let post = check_contract(&m.contract, &pipeline.registry, &bindings, Phase::Post)?;
        let inv = check_contract(&m.contract, &pipeline.registry, &bindings, Phase::Invariant)?;
        collect(&mut failures, &m.id, &post.results);
        collect(&mut failures, &m.id, &inv.results);

        trace.records.push(ProvenanceRecord {
            module_id: m.id.clone(),
            variant_tag: m.variant_tag.clone(),
            input_digests,
            output_digests,
            checks: pre.results.into_iter().chain(post.results.iter().cloned()).chain(inv.results.iter().cloned()).collect(),
            wall_time: started.elapsed(),
        });

        if mode == RunMode::Enforce {
            if let Some(f) = post.first_fatal().or_else(|| inv.first_fatal()) {
                return Err(violation(&m.id, f, trace));
            }
        }
        for (slot, a) in outputs {
            produced.insert(SlotRef::new(&m.id, &slot), a);
        }
    }

    let outputs = pipeline.sinks.iter().map(|s| (s.name.clone(), produced[&s.from].clone())).collect();
    Ok(PipelineRun { outputs, trace, failures })
}

fn collect(into: &mut Vec<CheckFailure>, module: &str, results: &[CheckResult]) {
    into.extend(results.iter().filter(|r| !r.passed).map(|r| CheckFailure {
        module_id: module.to_string(),
        check_id: r.check_id.clone(),
        phase: r.phase,
        severity: r.severity,
        message: r.message.clone(),
    }));
}

fn violation(module: &str, r: &CheckResult, trace: ProvenanceTrace) -> SemapError {
    SemapError::ContractViolation {
        module: module.to_string(),
        check_id: r.check_id.clone(),
        phase: r.phase,
        message: r.message.clone(),
        trace: Box::new(trace),
    }
}
