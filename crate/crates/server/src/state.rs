//! The service state machine. State only changes by applying events, so a
//! replay of the log reproduces the live state exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use hazardline_core::config::Domain;
use hazardline_core::digest::json_digest;
use hazardline_core::fusion::{update_belief, CitizenReport, FusionError, IgnitionBelief, ReportStatus, ReviewQueue};
use hazardline_core::hazard::FireState;
use hazardline_core::polfc::{ControlStrategy, Horizon, Plan, PlanningSession, PolfcError, ReplanTrigger, StrategyId};
use hazardline_core::raster::GridGeometry;
use hazardline_core::sched::{RunProgress, RunStatus};

use crate::events::{Event, EventRecord, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("strategy {strategy} is not on the Pareto front {front:?}")]
    NotOnFront { strategy: StrategyId, front: Vec<StrategyId> },
    #[error("{0}")]
    Invalid(String),
    #[error("replay diverged at seq {seq}: {message}")]
    Diverged { seq: u64, message: String },
}

impl From<FusionError> for StateError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::UnknownReport(id) => StateError::NotFound(format!("report {id}")),
            FusionError::AlreadyReviewed { .. } | FusionError::DuplicateReport(_) | FusionError::AlreadyIncorporated(_) => {
                StateError::Conflict(e.to_string())
            }
            other => StateError::Invalid(other.to_string()),
        }
    }
}

impl From<PolfcError> for StateError {
    fn from(e: PolfcError) -> Self {
        match e {
            PolfcError::NotOnFront { strategy, front } => StateError::NotOnFront { strategy, front },
            PolfcError::UnknownStrategy(id) => StateError::NotFound(format!("strategy {id}")),
            PolfcError::NoPlan => StateError::Conflict(e.to_string()),
            other => StateError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunPhase {
    Running,
    Completed,
    DeadlinePartial,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunState {
    pub run_id: String,
    pub session_id: String,
    pub trigger: ReplanTrigger,
    pub phase: RunPhase,
    pub progress: Option<RunProgress>,
    #[serde(skip)]
    pub plan: Option<Arc<Plan>>,
    pub error: Option<String>,
    /// What the run was planned from, for state raster requests.
    #[serde(skip)]
    pub observed: Arc<FireState>,
    #[serde(skip)]
    pub belief: Arc<IgnitionBelief>,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub session_id: String,
    pub planner: PlanningSession,
    pub active_run: Option<String>,
    pub runs: Vec<String>,
}

/// Public view of a session.
#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub grid: GridGeometry,
    pub horizon: Horizon,
    pub committed: Option<StrategyId>,
    pub belief_generation: u64,
    pub active_run: Option<String>,
    pub latest_run: Option<String>,
    pub selected: Option<StrategyId>,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    domain: Arc<Domain>,
    last_seq: u64,
    queue: ReviewQueue,
    belief: IgnitionBelief,
    sessions: BTreeMap<String, SessionState>,
    runs: BTreeMap<String, RunState>,
}

impl ServerState {
    pub fn new(domain: Arc<Domain>) -> Self {
        let belief = domain.prior.clone();
        Self { domain, last_seq: 0, queue: ReviewQueue::new(), belief, sessions: BTreeMap::new(), runs: BTreeMap::new() }
    }

    /// Rebuild the state from a continuity-checked log.
    pub fn replay(domain: Arc<Domain>, records: &[EventRecord]) -> Result<Self, StateError> {
        let mut state = Self::new(domain);
        for r in records {
            state.apply(r).map_err(|e| StateError::Diverged { seq: r.seq, message: e.to_string() })?;
        }
        Ok(state)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn queue(&self) -> &ReviewQueue {
        &self.queue
    }

    pub fn belief(&self) -> &IgnitionBelief {
        &self.belief
    }

    pub fn session(&self, id: &str) -> Option<&SessionState> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionState> {
        self.sessions.values()
    }

    pub fn run(&self, id: &str) -> Option<&RunState> {
        self.runs.get(id)
    }

    pub fn runs(&self) -> impl Iterator<Item = &RunState> {
        self.runs.values()
    }

    pub fn next_session_id(&self) -> String {
        format!("s{}", self.sessions.len() + 1)
    }

    pub fn next_run_id(&self) -> String {
        format!("r{}", self.runs.len() + 1)
    }

    pub fn summary(&self, session: &SessionState) -> SessionSummary {
        let p = &session.planner;
        SessionSummary {
            session_id: session.session_id.clone(),
            grid: *p.observed().geometry(),
            horizon: p.horizon(),
            committed: p.committed().map(|c| c.id),
            belief_generation: p.belief().generation(),
            active_run: session.active_run.clone(),
            latest_run: session.runs.last().cloned(),
            selected: p.plan().and_then(|pl| pl.selected),
        }
    }

    /// Accepted reports not yet in the belief, in id order.
    pub fn pending_evidence(&self) -> Vec<CitizenReport> {
        let mut out = self.queue.unassimilated(&self.belief);
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// The `BELIEF_UPDATED` event that would assimilate the pending
    /// evidence, if there is any.
    pub fn belief_update(&self) -> Result<Option<Event>, StateError> {
        let evidence = self.pending_evidence();
        if evidence.is_empty() {
            return Ok(None);
        }
        let next = update_belief(&self.belief, &evidence, &[], f64::INFINITY)?;
        Ok(Some(Event::BeliefUpdated {
            generation: next.generation(),
            reports: evidence.into_iter().map(|r| r.id).collect(),
            digest: next.digest(),
        }))
    }

    /// Apply one record. On error the state is left untouched.
    pub fn apply(&mut self, record: &EventRecord) -> Result<(), StateError> {
        if record.seq != self.last_seq + 1 {
            return Err(StateError::Invalid(format!("expected seq {}, got {}", self.last_seq + 1, record.seq)));
        }
        let mut next = self.clone();
        next.apply_event(&record.event)?;
        next.last_seq = record.seq;
        *self = next;
        Ok(())
    }

    fn apply_event(&mut self, event: &Event) -> Result<(), StateError> {
        match event {
            Event::SessionCreated { session_id } => {
                if *session_id != self.next_session_id() {
                    return Err(StateError::Invalid(format!(
                        "session id {session_id}, expected {}",
                        self.next_session_id()
                    )));
                }
                let d = &self.domain;
                let planner = PlanningSession::new(
                    d.config.planning_config(),
                    d.model.clone(),
                    d.design.clone(),
                    d.initial.clone(),
                    self.belief.clone(),
                )?;
                self.sessions.insert(
                    session_id.clone(),
                    SessionState { session_id: session_id.clone(), planner, active_run: None, runs: Vec::new() },
                );
            }
            Event::ReportIngested { report } => {
                if report.status != ReportStatus::Pending {
                    return Err(StateError::Invalid(format!("report {} must arrive PENDING", report.id)));
                }
                self.queue.ingest(report.clone())?;
            }
            Event::ReportReviewed { report_id, decision, reviewer } => {
                self.queue.review(report_id, *decision, reviewer)?;
            }
            Event::BeliefUpdated { generation, reports, digest } => {
                let evidence = reports
                    .iter()
                    .map(|id| {
                        let r = self.queue.get(id).ok_or_else(|| StateError::NotFound(format!("report {id}")))?;
                        if r.status != ReportStatus::Accepted {
                            return Err(StateError::Invalid(format!("report {id} is {:?}, not ACCEPTED", r.status)));
                        }
                        Ok(r.clone())
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let next = update_belief(&self.belief, &evidence, &[], f64::INFINITY)?;
                if next.generation() != *generation || next.digest() != *digest {
                    return Err(StateError::Invalid(format!(
                        "belief update yields generation {} / {}, event records {generation} / {digest}",
                        next.generation(),
                        next.digest()
                    )));
                }
                self.belief = next;
            }
            Event::RunStarted { run_id, session_id, trigger } => {
                if *run_id != self.next_run_id() {
                    return Err(StateError::Invalid(format!("run id {run_id}, expected {}", self.next_run_id())));
                }
                let belief = self.belief.clone();
                let session = self.session_mut(session_id)?;
                if let Some(active) = &session.active_run {
                    return Err(StateError::Conflict(format!("session {session_id} already runs {active}")));
                }
                session.planner.set_belief(belief)?;
                session.active_run = Some(run_id.clone());
                session.runs.push(run_id.clone());
                let observed = Arc::new(session.planner.observed().clone());
                let belief = Arc::new(session.planner.belief().clone());
                self.runs.insert(
                    run_id.clone(),
                    RunState {
                        run_id: run_id.clone(),
                        session_id: session_id.clone(),
                        trigger: *trigger,
                        phase: RunPhase::Running,
                        progress: None,
                        plan: None,
                        error: None,
                        observed,
                        belief,
                    },
                );
            }
            Event::RunProgress { run_id, progress } => {
                let run = self.running_mut(run_id)?;
                run.progress = Some(progress.clone());
            }
            Event::PlanComputed { run_id, outcome } => {
                let session_id = self.running_mut(run_id)?.session_id.clone();
                let session = self.session_mut(&session_id)?;
                let (phase, plan, error) = match outcome {
                    RunOutcome::Plan { plan } => {
                        session.planner.adopt((**plan).clone())?;
                        let phase = match plan.progress.status {
                            RunStatus::Completed => RunPhase::Completed,
                            _ => RunPhase::DeadlinePartial,
                        };
                        (phase, Some(Arc::new((**plan).clone())), None)
                    }
                    RunOutcome::Failed { message } => (RunPhase::Failed, None, Some(message.clone())),
                };
                session.active_run = None;
                let run = self.runs.get_mut(run_id).expect("checked above");
                run.phase = phase;
                if let Some(p) = &plan {
                    run.progress = Some(p.progress.clone());
                }
                run.plan = plan;
                run.error = error;
            }
            Event::StrategyCommitted { session_id, strategy_id } => {
                let session = self.session_mut(session_id)?;
                if let Some(active) = &session.active_run {
                    return Err(StateError::Conflict(format!("session {session_id} is replanning in {active}")));
                }
                session.planner.commit(*strategy_id)?;
            }
        }
        Ok(())
    }

    fn session_mut(&mut self, id: &str) -> Result<&mut SessionState, StateError> {
        self.sessions.get_mut(id).ok_or_else(|| StateError::NotFound(format!("session {id}")))
    }

    fn running_mut(&mut self, id: &str) -> Result<&mut RunState, StateError> {
        let run = self.runs.get_mut(id).ok_or_else(|| StateError::NotFound(format!("run {id}")))?;
        if run.phase != RunPhase::Running {
            return Err(StateError::Conflict(format!("run {id} has already finished")));
        }
        Ok(run)
    }

    /// Digest over everything the log determines: queue, belief, sessions,
    /// runs and the last applied seq.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct SessionView<'a> {
            id: &'a str,
            horizon: Horizon,
            committed: Option<&'a ControlStrategy>,
            belief: String,
            active_run: &'a Option<String>,
            runs: &'a [String],
            plan: Option<String>,
        }
        #[derive(Serialize)]
        struct RunView<'a> {
            run: &'a RunState,
            plan: Option<String>,
        }
        #[derive(Serialize)]
        struct View<'a> {
            last_seq: u64,
            reports: &'a [CitizenReport],
            belief: String,
            sessions: Vec<SessionView<'a>>,
            runs: Vec<RunView<'a>>,
        }
        let sessions = self
            .sessions
            .values()
            .map(|s| SessionView {
                id: &s.session_id,
                horizon: s.planner.horizon(),
                committed: s.planner.committed(),
                belief: s.planner.belief().digest(),
                active_run: &s.active_run,
                runs: &s.runs,
                plan: s.planner.plan().map(Plan::digest),
            })
            .collect();
        let runs = self.runs.values().map(|r| RunView { run: r, plan: r.plan.as_deref().map(Plan::digest) }).collect();
        json_digest(&View {
            last_seq: self.last_seq,
            reports: self.queue.reports(),
            belief: self.belief.digest(),
            sessions,
            runs,
        })
    }
}
