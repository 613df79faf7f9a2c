use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::contract::{Contract, Phase};
use super::registry::{Registry, TransformFn};
use super::signature::Signature;
use super::SemapError;

/// A data-transformation module: typed input/output slots, a contract and a
/// reference to a registered pure transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmModule {
    pub id: String,
    #[serde(default)]
    pub variant_tag: String,
    pub inputs: BTreeMap<String, Signature>,
    pub outputs: BTreeMap<String, Signature>,
    #[serde(default)]
    pub contract: Contract,
    pub transform: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

impl DtmModule {
    /// Slot names must be unique across inputs and outputs, and every check
    /// may only reference declared slots (preconditions: inputs only).
    pub fn validate(&self) -> Result<(), SemapError> {
        if let Some(dup) = self.inputs.keys().find(|k| self.outputs.contains_key(*k)) {
            return Err(SemapError::DuplicateSlot { module: self.id.clone(), slot: dup.clone() });
        }
        self.contract.validate_ids()?;
        for (phase, check) in self.contract.all_checks() {
            for slot in &check.slots {
                let declared = match phase {
                    Phase::Pre => self.inputs.contains_key(slot),
                    _ => self.inputs.contains_key(slot) || self.outputs.contains_key(slot),
                };
                if !declared {
                    return Err(SemapError::UndeclaredSlot {
                        module: self.id.clone(),
                        check_id: check.id.clone(),
                        slot: slot.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `node.slot` reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SlotRef {
    pub node: String,
    pub slot: String,
}

impl SlotRef {
    pub fn new(node: &str, slot: &str) -> Self {
        Self { node: node.to_string(), slot: slot.to_string() }
    }
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.slot)
    }
}

impl FromStr for SlotRef {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once('.') {
            Some((n, sl)) if !n.is_empty() && !sl.is_empty() => Ok(SlotRef::new(n, sl)),
            _ => Err(format!("slot reference {s:?} is not of the form node.slot")),
        }
    }
}

impl TryFrom<String> for SlotRef {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<SlotRef> for String {
    fn from(r: SlotRef) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: SlotRef,
    pub to: SlotRef,
}

/// Externally bound input feeding one or more consumer slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub name: String,
    pub targets: Vec<SlotRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sink {
    pub name: String,
    pub from: SlotRef,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DtmGraph {
    pub modules: Vec<DtmModule>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub sources: Vec<Source>,
    #[serde(default)]
    pub sinks: Vec<Sink>,
}

impl DtmGraph {
    pub fn from_json(text: &str) -> Result<Self, SemapError> {
        serde_json::from_str(text).map_err(|e| SemapError::Document(e.to_string()))
    }
}

/// A pipeline graph plus optional bindings for its sources, as stored in
/// a pipeline document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineDocument {
    #[serde(flatten)]
    pub graph: DtmGraph,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, super::SemanticArray>,
}

impl PipelineDocument {
    pub fn from_json(text: &str) -> Result<Self, SemapError> {
        serde_json::from_str(text).map_err(|e| SemapError::Document(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Feed {
    Source(String),
    Edge(SlotRef),
}

pub(crate) struct Step {
    pub module: DtmModule,
    pub transform: Arc<TransformFn>,
    pub feeds: BTreeMap<String, Feed>,
}

/// A composed, topologically ordered pipeline ready to run.
pub struct Pipeline {
    pub(crate) steps: Vec<Step>,
    pub(crate) sources: BTreeMap<String, Signature>,
    pub(crate) sinks: Vec<Sink>,
    pub(crate) registry: Registry,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline").field("order", &self.order()).field("sources", &self.sources).finish()
    }
}

impl Pipeline {
    /// Module ids in execution order.
    pub fn order(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.module.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn source_signatures(&self) -> &BTreeMap<String, Signature> {
        &self.sources
    }

    pub fn sink_names(&self) -> impl Iterator<Item = &str> {
        self.sinks.iter().map(|s| s.name.as_str())
    }
}

/// Validate `graph` against `registry` and order it for execution.
///
/// Every structural problem is detected here, before anything runs.
pub fn compose(graph: &DtmGraph, registry: &Registry) -> Result<Pipeline, SemapError> {
    let mut index = BTreeMap::new();
    for (i, m) in graph.modules.iter().enumerate() {
        if index.insert(m.id.as_str(), i).is_some() {
            return Err(SemapError::DuplicateModule(m.id.clone()));
        }
    }

    let mut transforms = Vec::with_capacity(graph.modules.len());
    for m in &graph.modules {
        m.validate()?;
        for (_, check) in m.contract.all_checks() {
            if registry.predicate(&check.predicate).is_none() {
                return Err(SemapError::UnresolvedPredicate {
                    check_id: format!("{}/{}", m.id, check.id),
                    predicate: check.predicate.clone(),
                });
            }
        }
        let t = registry.transform(&m.transform).ok_or_else(|| SemapError::UnresolvedTransform {
            module: m.id.clone(),
            transform: m.transform.clone(),
        })?;
        transforms.push(t);
    }

    let module = |r: &SlotRef| index.get(r.node.as_str()).map(|&i| &graph.modules[i]);
    let output_sig = |r: &SlotRef| module(r).and_then(|m| m.outputs.get(&r.slot));
    let input_sig = |r: &SlotRef| module(r).and_then(|m| m.inputs.get(&r.slot));

    let mut feeds: BTreeMap<SlotRef, Vec<Feed>> = BTreeMap::new();
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); graph.modules.len()];
    for e in &graph.edges {
        let producer = output_sig(&e.from).ok_or_else(|| SemapError::DanglingSlot {
            slot: e.from.to_string(),
            reason: "edge source is not a declared output slot".into(),
        })?;
        let consumer = input_sig(&e.to).ok_or_else(|| SemapError::DanglingSlot {
            slot: e.to.to_string(),
            reason: "edge target is not a declared input slot".into(),
        })?;
        if !producer.compatible_with(consumer) {
            return Err(SemapError::SignatureMismatch {
                from: e.from.to_string(),
                to: e.to.to_string(),
                producer: producer.clone(),
                consumer: consumer.clone(),
            });
        }
        feeds.entry(e.to.clone()).or_default().push(Feed::Edge(e.from.clone()));
        deps[index[e.to.node.as_str()]].insert(index[e.from.node.as_str()]);
    }

    let mut sources = BTreeMap::new();
    for s in &graph.sources {
        if sources.contains_key(&s.name) {
            return Err(SemapError::DuplicateSource(s.name.clone()));
        }
        let mut sig: Option<(&SlotRef, &Signature)> = None;
        for t in &s.targets {
            let consumer = input_sig(t).ok_or_else(|| SemapError::DanglingSlot {
                slot: t.to_string(),
                reason: format!("source {} targets an undeclared input slot", s.name),
            })?;
            if let Some((first, first_sig)) = sig {
                if !first_sig.compatible_with(consumer) {
                    return Err(SemapError::SignatureMismatch {
                        from: first.to_string(),
                        to: t.to_string(),
                        producer: first_sig.clone(),
                        consumer: consumer.clone(),
                    });
                }
            }
            sig.get_or_insert((t, consumer));
            feeds.entry(t.clone()).or_default().push(Feed::Source(s.name.clone()));
        }
        let (_, sig) = sig.ok_or_else(|| SemapError::DanglingSlot {
            slot: s.name.clone(),
            reason: "source has no targets".into(),
        })?;
        sources.insert(s.name.clone(), sig.clone());
    }

    let mut step_feeds: Vec<BTreeMap<String, Feed>> = vec![BTreeMap::new(); graph.modules.len()];
    for (i, m) in graph.modules.iter().enumerate() {
        for slot in m.inputs.keys() {
            let r = SlotRef::new(&m.id, slot);
            match feeds.remove(&r).as_deref() {
                None | Some([]) => {
                    return Err(SemapError::DanglingSlot {
                        slot: r.to_string(),
                        reason: "input slot has no producer or external binding".into(),
                    })
                }
                Some([one]) => {
                    step_feeds[i].insert(slot.clone(), one.clone());
                }
                Some(_) => return Err(SemapError::MultipleProducers(r.to_string())),
            }
        }
    }

    for s in &graph.sinks {
        if output_sig(&s.from).is_none() {
            return Err(SemapError::DanglingSlot {
                slot: s.from.to_string(),
                reason: format!("sink {} reads an undeclared output slot", s.name),
            });
        }
    }
    let sink_names: BTreeSet<&str> = graph.sinks.iter().map(|s| s.name.as_str()).collect();
    if sink_names.len() != graph.sinks.len() {
        return Err(SemapError::Document("sink names must be unique".into()));
    }

    let order = topological_order(&deps).map_err(|cycle| SemapError::Cycle(
        cycle.into_iter().map(|i| graph.modules[i].id.clone()).collect(),
    ))?;

    let mut transforms: Vec<Option<Arc<TransformFn>>> = transforms.into_iter().map(Some).collect();
    let steps = order
        .into_iter()
        .map(|i| Step {
            module: graph.modules[i].clone(),
            transform: transforms[i].take().expect("each node ordered once"),
            feeds: std::mem::take(&mut step_feeds[i]),
        })
        .collect();

    Ok(Pipeline { steps, sources, sinks: graph.sinks.clone(), registry: registry.clone() })
}

/// Kahn's algorithm, always releasing the lowest declaration index first.
/// On failure returns the nodes of one cycle in traversal order.
fn topological_order(deps: &[BTreeSet<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = deps.len();
    let mut indegree: Vec<usize> = deps.iter().map(BTreeSet::len).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (node, ds) in deps.iter().enumerate() {
        for &d in ds {
            dependents[d].push(node);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &d in &dependents[next] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.insert(d);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Walk dependencies among the unreleased nodes until one repeats.
    let start = (0..n).find(|&i| indegree[i] > 0).expect("some node is blocked");
    let mut path = vec![start];
    let mut seen = BTreeMap::from([(start, 0usize)]);
    let mut cur = start;
    loop {
        let next = *deps[cur].iter().find(|&&d| indegree[d] > 0).expect("blocked node has a blocked dependency");
        if let Some(&pos) = seen.get(&next) {
            let mut cycle = path[pos..].to_vec();
            cycle.reverse();
            return Err(cycle);
        }
        seen.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}
