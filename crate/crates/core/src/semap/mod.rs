//! Semantic array programming kernel.
//!
//! Typed arrays ([`SemanticArray`]) flow between data-transformation modules
//! ([`DtmModule`]). Each module carries a [`Contract`] of named predicates
//! checked before and after its transform. A [`DtmGraph`] is validated and
//! ordered by [`compose`] and executed by [`run_pipeline`], which records a
//! [`ProvenanceTrace`].
//!
//! Pipeline documents are JSON; see `docs/pipeline-schema.md`.

mod array;
mod contract;
mod graph;
mod pipeline;
mod registry;
mod signature;

pub use array::{ArrayError, Axis, ElementKind, SemanticArray};
pub use contract::{check_contract, Check, CheckReport, CheckResult, Contract, Phase, Severity};
pub use graph::{compose, DtmGraph, DtmModule, Edge, Pipeline, PipelineDocument, Sink, SlotRef, Source};
pub use pipeline::{run_pipeline, CheckFailure, PipelineRun, ProvenanceRecord, ProvenanceTrace, RunMode};
pub use registry::{PredicateFn, Registry, TransformFn, TransformInput, TransformOutput};
pub use signature::{AxisSpec, Signature};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemapError {
    #[error("check {check_id}: predicate {predicate:?} is not registered")]
    UnresolvedPredicate { check_id: String, predicate: String },
    #[error("module {module}: transform {transform:?} is not registered")]
    UnresolvedTransform { module: String, transform: String },
    #[error("check {check_id} references slot {slot} which is not bound")]
    MissingSlot { check_id: String, slot: String },
    #[error("module {module}: check {check_id} references undeclared slot {slot}")]
    UndeclaredSlot { module: String, check_id: String, slot: String },
    #[error("duplicate check id {0:?}")]
    DuplicateCheckId(String),
    #[error("duplicate module id {0:?}")]
    DuplicateModule(String),
    #[error("module {module}: slot name {slot:?} used for both input and output")]
    DuplicateSlot { module: String, slot: String },
    #[error("duplicate source {0:?}")]
    DuplicateSource(String),
    #[error("dangling slot {slot}: {reason}")]
    DanglingSlot { slot: String, reason: String },
    #[error("input slot {0} has more than one producer")]
    MultipleProducers(String),
    #[error("signature mismatch {from} -> {to}: producer {producer} vs consumer {consumer}")]
    SignatureMismatch { from: String, to: String, producer: Signature, consumer: Signature },
    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("source {0} is not bound")]
    MissingInput(String),
    #[error("binding {0} does not name a pipeline source")]
    UnknownInput(String),
    #[error("source {source_name} binding does not satisfy its signature: {message}")]
    InputSignature { source_name: String, message: String },
    #[error("module {module}: {phase} check {check_id} failed: {message}")]
    ContractViolation {
        module: String,
        check_id: String,
        phase: Phase,
        message: String,
        trace: Box<ProvenanceTrace>,
    },
    #[error("module {module} failed: {message}")]
    ModuleExecution { module: String, message: String },
    #[error("invalid pipeline document: {0}")]
    Document(String),
}

impl SemapError {
    /// Errors detectable without running anything.
    pub fn is_composition_error(&self) -> bool {
        !matches!(
            self,
            SemapError::MissingInput(_)
                | SemapError::UnknownInput(_)
                | SemapError::InputSignature { .. }
                | SemapError::ContractViolation { .. }
                | SemapError::ModuleExecution { .. }
                | SemapError::MissingSlot { .. }
        )
    }
}
