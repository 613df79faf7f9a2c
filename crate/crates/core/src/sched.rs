//! Deadline-aware execution of the strategy × scenario task array.
//!
//! Tasks are dispatched breadth-first: round `r` holds the `r`-th scenario
//! (by weight) of every strategy, so every candidate gets a first estimate
//! before any gets a second. Workers pull tasks in dispatch order; once the
//! deadline has passed no new task starts, but in-flight tasks finish.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::cost::CostVector;
use crate::ensemble::{expectation, EnsembleDesign, EnsembleError, ScenarioId};
use crate::polfc::StrategyId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeBudget {
    #[serde(with = "millis")]
    pub deadline: Duration,
    pub workers: usize,
    #[serde(default, with = "opt_millis", skip_serializing_if = "Option::is_none")]
    pub task_timeout: Option<Duration>,
}

impl ComputeBudget {
    pub fn new(deadline: Duration, workers: usize) -> Self {
        Self { deadline, workers, task_timeout: None }
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        if self.deadline.is_zero() {
            return Err(SchedError::InvalidBudget("deadline must be positive".into()));
        }
        if self.workers == 0 {
            return Err(SchedError::InvalidBudget("at least one worker is required".into()));
        }
        Ok(())
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

mod opt_millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&(d.as_millis() as u64)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<u64>::deserialize(d)?.map(Duration::from_millis))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId {
    pub strategy: StrategyId,
    pub scenario: ScenarioId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub id: TaskId,
    /// Scenario weight; heavier scenarios are dispatched first within a strategy.
    pub weight: f64,
    /// Estimated cost in cell-steps.
    pub est_cost: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Running,
    Completed,
    DeadlinePartial,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyCoverage {
    pub completed: usize,
    pub total: usize,
    /// Weight of the scenarios that finished successfully.
    pub covered_weight: f64,
}

/// Snapshot of a run. Counts cover the completed prefix of the dispatch
/// order, so they never decrease and stay breadth-balanced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProgress {
    pub completed: usize,
    pub total: usize,
    pub per_strategy: BTreeMap<StrategyId, StrategyCoverage>,
    pub elapsed_ms: u64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskOutcome<T> {
    Ok { value: T },
    Failed { message: String },
    TimedOut { elapsed_ms: u64 },
}

impl<T> TaskOutcome<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            TaskOutcome::Ok { value } => Some(value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<T> {
    pub results: BTreeMap<TaskId, TaskOutcome<T>>,
    pub progress: RunProgress,
    /// Dispatch order of the tasks that were started.
    pub dispatched: Vec<TaskId>,
    /// Longest single task, for checking the deadline bound.
    pub max_task_time: Duration,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedError {
    #[error("invalid compute budget: {0}")]
    InvalidBudget(String),
    #[error("no tasks to run")]
    NoTasks,
    #[error("duplicate task ({}, {})", .0.strategy, .0.scenario)]
    DuplicateTask(TaskId),
    #[error("strategy {0} has no completed scenario")]
    ZeroCoverage(StrategyId),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Breadth-first dispatch order: `(round, strategy, weight desc, scenario)`.
pub fn schedule(tasks: &[EvalTask]) -> Result<Vec<EvalTask>, SchedError> {
    let mut by_strategy: BTreeMap<StrategyId, Vec<&EvalTask>> = BTreeMap::new();
    for t in tasks {
        by_strategy.entry(t.id.strategy).or_default().push(t);
    }
    let mut keyed = Vec::with_capacity(tasks.len());
    for list in by_strategy.values_mut() {
        list.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.id.scenario.cmp(&b.id.scenario)));
        keyed.extend(list.iter().enumerate().map(|(round, t)| (round, *t)));
    }
    // Stable sort keeps the within-strategy order inside each round.
    keyed.sort_by_key(|(round, t)| (*round, t.id.strategy));
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(keyed.len());
    for (_, t) in keyed {
        if !seen.insert(t.id) {
            return Err(SchedError::DuplicateTask(t.id));
        }
        out.push(t.clone());
    }
    Ok(out)
}

struct Shared<T> {
    next: usize,
    stopped: bool,
    done: Vec<Option<TaskOutcome<T>>>,
    prefix: usize,
    progress: RunProgress,
    max_task_time: Duration,
}

/// Evaluate `tasks` on a pool of `budget.workers` threads.
///
/// The first task always starts; later tasks start only before the
/// deadline. A task that panics or returns an error is recorded as failed;
/// one that exceeds the per-task timeout is recorded as timed out (its
/// value is discarded, the thread is not interrupted). `observe` receives a
/// progress snapshot after each change of the completed prefix.
pub fn run_with_deadline<T, F>(
    tasks: &[EvalTask],
    budget: &ComputeBudget,
    eval: F,
    observe: Option<&(dyn Fn(&RunProgress) + Sync)>,
) -> Result<RunOutcome<T>, SchedError>
where
    T: Send,
    F: Fn(&EvalTask) -> Result<T, String> + Sync,
{
    budget.validate()?;
    if tasks.is_empty() {
        return Err(SchedError::NoTasks);
    }
    let order = schedule(tasks)?;
    let mut per_strategy: BTreeMap<StrategyId, StrategyCoverage> = BTreeMap::new();
    for t in &order {
        per_strategy.entry(t.id.strategy).or_default().total += 1;
    }
    let start = Instant::now();
    let shared = Mutex::new(Shared {
        next: 0,
        stopped: false,
        done: (0..order.len()).map(|_| None).collect(),
        prefix: 0,
        progress: RunProgress {
            completed: 0,
            total: order.len(),
            per_strategy,
            elapsed_ms: 0,
            status: RunStatus::Running,
        },
        max_task_time: Duration::ZERO,
    });

    let worker = || loop {
        let i = {
            let mut s = shared.lock().unwrap();
            if s.stopped || s.next >= order.len() {
                break;
            }
            if s.next > 0 && start.elapsed() >= budget.deadline {
                s.stopped = true;
                break;
            }
            s.next += 1;
            s.next - 1
        };
        let task = &order[i];
        let began = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| eval(task)));
        let took = began.elapsed();
        let outcome = match result {
            _ if budget.task_timeout.is_some_and(|limit| took > limit) => {
                TaskOutcome::TimedOut { elapsed_ms: took.as_millis() as u64 }
            }
            Ok(Ok(value)) => TaskOutcome::Ok { value },
            Ok(Err(message)) => TaskOutcome::Failed { message },
            Err(panic) => TaskOutcome::Failed { message: panic_message(panic) },
        };

        let mut s = shared.lock().unwrap();
        s.max_task_time = s.max_task_time.max(took);
        s.done[i] = Some(outcome);
        let before = s.prefix;
        while s.prefix < order.len() && s.done[s.prefix].is_some() {
            let t = &order[s.prefix];
            let ok = matches!(s.done[s.prefix], Some(TaskOutcome::Ok { .. }));
            let cov = s.progress.per_strategy.get_mut(&t.id.strategy).expect("strategy registered");
            cov.completed += 1;
            if ok {
                cov.covered_weight += t.weight;
            }
            s.prefix += 1;
        }
        if s.prefix != before {
            s.progress.completed = s.prefix;
            s.progress.elapsed_ms = start.elapsed().as_millis() as u64;
            if let Some(f) = observe {
                f(&s.progress);
            }
        }
    };

    std::thread::scope(|scope| {
        for _ in 0..budget.workers.min(order.len()) {
            scope.spawn(worker);
        }
    });

    let s = shared.into_inner().unwrap();
    let mut progress = s.progress;
    progress.elapsed_ms = start.elapsed().as_millis() as u64;
    progress.status = if progress.completed == progress.total { RunStatus::Completed } else { RunStatus::DeadlinePartial };
    let dispatched: Vec<TaskId> = order[..s.next].iter().map(|t| t.id).collect();
    let results = order.iter().zip(s.done).filter_map(|(t, d)| d.map(|d| (t.id, d))).collect();
    Ok(RunOutcome { results, progress, dispatched, max_task_time: s.max_task_time })
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = panic.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEstimate {
    pub strategy: StrategyId,
    pub expected: CostVector,
    pub per_scenario: BTreeMap<ScenarioId, CostVector>,
    pub covered_fraction: f64,
    pub low_confidence: bool,
}

/// Per-strategy expectation over whichever scenarios completed.
///
/// Strategies whose covered weight fraction falls below `min_coverage` are
/// flagged `low_confidence`.
pub fn estimate_partial(
    results: &BTreeMap<TaskId, TaskOutcome<CostVector>>,
    design: &EnsembleDesign,
    strategies: &[StrategyId],
    min_coverage: f64,
) -> Result<Vec<StrategyEstimate>, SchedError> {
    strategies
        .iter()
        .map(|&strategy| {
            let per_scenario: BTreeMap<ScenarioId, CostVector> = results
                .range(
                    TaskId { strategy, scenario: ScenarioId(0) }..=TaskId { strategy, scenario: ScenarioId(u32::MAX) },
                )
                .filter_map(|(id, o)| o.value().map(|v| (id.scenario, v.clone())))
                .collect();
            let e = match expectation(&per_scenario, design) {
                Err(EnsembleError::EmptyCoverage) => return Err(SchedError::ZeroCoverage(strategy)),
                other => other?,
            };
            Ok(StrategyEstimate {
                strategy,
                expected: e.mean,
                per_scenario,
                covered_fraction: e.covered_fraction,
                low_confidence: e.covered_fraction < min_coverage,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_lhs, ForecastMember, UncertaintySpace};
    use crate::hazard::SpreadRuleVariant;

    fn task(s: u32, e: u32, w: f64) -> EvalTask {
        EvalTask { id: TaskId { strategy: StrategyId(s), scenario: ScenarioId(e) }, weight: w, est_cost: 1 }
    }

    fn ids(tasks: &[EvalTask]) -> Vec<(u32, u32)> {
        tasks.iter().map(|t| (t.id.strategy.0, t.id.scenario.0)).collect()
    }

    #[test]
    fn single_strategy_by_weight() {
        let order = schedule(&[task(1, 0, 0.2), task(1, 1, 0.5), task(1, 2, 0.3)]).unwrap();
        assert_eq!(ids(&order), [(1, 1), (1, 2), (1, 0)]);
    }

    #[test]
    fn breadth_first_rounds() {
        let order = schedule(&[task(2, 2, 0.5), task(1, 2, 0.5), task(2, 1, 0.5), task(1, 1, 0.5)]).unwrap();
        assert_eq!(ids(&order), [(1, 1), (2, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn duplicate_tasks_rejected() {
        assert!(matches!(schedule(&[task(1, 1, 0.5), task(1, 1, 0.5)]), Err(SchedError::DuplicateTask(_))));
    }

    #[test]
    fn generous_deadline_completes() {
        let tasks: Vec<EvalTask> = (0..3).flat_map(|s| (0..4).map(move |e| task(s, e, 0.25))).collect();
        let out = run_with_deadline(&tasks, &ComputeBudget::new(Duration::from_secs(10), 4), |t| Ok(t.id.scenario.0), None)
            .unwrap();
        assert_eq!(out.progress.status, RunStatus::Completed);
        assert_eq!(out.results.len(), 12);
        assert!(out.progress.per_strategy.values().all(|c| (c.covered_weight - 1.0).abs() < 1e-12));
    }

    #[test]
    fn failures_are_recorded_per_task() {
        let tasks = [task(1, 0, 0.5), task(1, 1, 0.5)];
        let out = run_with_deadline(
            &tasks,
            &ComputeBudget::new(Duration::from_secs(10), 2),
            |t| {
                if t.id.scenario.0 == 1 {
                    panic!("boom")
                }
                Ok(1)
            },
            None,
        )
        .unwrap();
        assert_eq!(out.progress.status, RunStatus::Completed);
        assert!(matches!(out.results[&tasks[1].id], TaskOutcome::Failed { .. }));
        assert_eq!(out.progress.per_strategy[&StrategyId(1)].covered_weight, 0.5);
    }

    #[test]
    fn timeouts_are_recorded() {
        let tasks = [task(1, 0, 1.0)];
        let mut budget = ComputeBudget::new(Duration::from_secs(10), 1);
        budget.task_timeout = Some(Duration::from_millis(5));
        let out = run_with_deadline(
            &tasks,
            &budget,
            |_| {
                std::thread::sleep(Duration::from_millis(30));
                Ok(())
            },
            None,
        )
        .unwrap();
        assert!(matches!(out.results[&tasks[0].id], TaskOutcome::TimedOut { .. }));
    }

    fn design4() -> EnsembleDesign {
        let space = UncertaintySpace {
            variants: vec![SpreadRuleVariant::ALL[0]],
            members: vec![ForecastMember { id: "m".into(), prior: 1.0 }],
            parameters: BTreeMap::new(),
        };
        sample_lhs(&space, 4, 0).unwrap()
    }

    fn ok(v: f64) -> TaskOutcome<CostVector> {
        TaskOutcome::Ok { value: CostVector::new(vec![v]) }
    }

    #[test]
    fn partial_estimates() {
        let d = design4();
        let s = StrategyId(3);
        let id = |e| TaskId { strategy: s, scenario: ScenarioId(e) };
        let half = BTreeMap::from([(id(0), ok(2.0)), (id(1), ok(4.0))]);
        let est = estimate_partial(&half, &d, &[s], 0.3).unwrap();
        assert_eq!(est[0].expected.values(), &[3.0]);
        assert_eq!(est[0].covered_fraction, 0.5);
        assert!(!est[0].low_confidence);

        let quarter = BTreeMap::from([(id(2), ok(2.0))]);
        assert!(estimate_partial(&quarter, &d, &[s], 0.3).unwrap()[0].low_confidence);
        assert_eq!(estimate_partial(&quarter, &d, &[StrategyId(9)], 0.3), Err(SchedError::ZeroCoverage(StrategyId(9))));
    }

    #[test]
    fn budget_round_trips() {
        let mut b = ComputeBudget::new(Duration::from_millis(1500), 3);
        b.task_timeout = Some(Duration::from_millis(200));
        let text = serde_json::to_string(&b).unwrap();
        assert_eq!(text, r#"{"deadline":1500,"workers":3,"task_timeout":200}"#);
        assert_eq!(serde_json::from_str::<ComputeBudget>(&text).unwrap(), b);
    }
}
