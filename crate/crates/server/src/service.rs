//! Single-writer service core.
//!
//! One thread owns the event log and the state machine. Handlers send it
//! commands and read immutable snapshots published after every append, so
//! reads never wait on the writer.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use tokio::sync::{mpsc, oneshot, watch};

use hazardline_core::config::Domain;
use hazardline_core::fusion::{CitizenReport, Decision, ReportStatus};
use hazardline_core::polfc::{ReplanTrigger, StrategyId};
use hazardline_core::sched::RunProgress;

use crate::events::{Event, EventError, EventLog, EventRecord, RunOutcome};
use crate::state::{RunPhase, ServerState, StateError};

pub const LOG_FILE: &str = "events.ndjson";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Log(#[from] EventError),
    #[error("the writer has stopped")]
    Stopped,
}

type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;
type Build = Box<dyn FnOnce(&ServerState) -> Result<Vec<Event>, StateError> + Send>;

enum Command {
    /// Events derived from the current state, appended all-or-nothing.
    Append { build: Build, reply: Reply<Vec<EventRecord>> },
    Replan { session_id: String, trigger: ReplanTrigger, reply: Reply<(String, Vec<EventRecord>)> },
    Progress { run_id: String, progress: RunProgress },
    Finish { run_id: String, outcome: RunOutcome },
}

/// Handle shared by all request handlers.
#[derive(Clone)]
pub struct Service {
    commands: mpsc::UnboundedSender<Command>,
    snapshot: watch::Receiver<Arc<ServerState>>,
    events: Arc<RwLock<Vec<EventRecord>>>,
    log_path: PathBuf,
}

struct Writer {
    log: EventLog,
    state: Arc<ServerState>,
    publish: watch::Sender<Arc<ServerState>>,
    events: Arc<RwLock<Vec<EventRecord>>>,
    commands: mpsc::UnboundedSender<Command>,
}

impl Writer {
    /// Dry-run the batch, then append and apply event by event.
    fn commit(&mut self, events: Vec<Event>) -> Result<Vec<EventRecord>, ServiceError> {
        let mut probe = (*self.state).clone();
        for (seq, e) in (self.log.next_seq()..).zip(&events) {
            probe.apply(&EventRecord { seq, timestamp: String::new(), event: e.clone() })?;
        }
        let mut written = Vec::with_capacity(events.len());
        let mut state = (*self.state).clone();
        for e in events {
            let record = self.log.append(e)?;
            state.apply(&record).expect("checked by the dry run");
            written.push(record);
        }
        self.state = Arc::new(state);
        self.events.write().expect("event list lock").extend(written.iter().cloned());
        self.publish.send_replace(self.state.clone());
        Ok(written)
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Append { build, reply } => {
                let result = build(&self.state).map_err(ServiceError::from).and_then(|events| self.commit(events));
                let _ = reply.send(result);
            }
            Command::Replan { session_id, trigger, reply } => {
                let _ = reply.send(self.start_run(&session_id, trigger));
            }
            Command::Progress { run_id, progress } => {
                let running = self.state.run(&run_id).is_some_and(|r| r.phase == RunPhase::Running);
                if running {
                    let _ = self.commit(vec![Event::RunProgress { run_id, progress }]);
                }
            }
            Command::Finish { run_id, outcome } => {
                let event = Event::PlanComputed { run_id: run_id.clone(), outcome };
                if self.commit(vec![event]).is_err() {
                    let message = "the computed plan could not be recorded".to_string();
                    let _ = self.commit(vec![Event::PlanComputed { run_id, outcome: RunOutcome::Failed { message } }]);
                }
            }
        }
    }

    fn start_run(&mut self, session_id: &str, trigger: ReplanTrigger) -> Result<(String, Vec<EventRecord>), ServiceError> {
        let session = self.state.session(session_id).ok_or_else(|| StateError::NotFound(format!("session {session_id}")))?;
        if let Some(active) = &session.active_run {
            return Err(StateError::Conflict(format!("session {session_id} already runs {active}")).into());
        }
        let run_id = self.state.next_run_id();
        let mut events: Vec<Event> = self.state.belief_update()?.into_iter().collect();
        events.push(Event::RunStarted { run_id: run_id.clone(), session_id: session_id.into(), trigger });
        let written = self.commit(events)?;

        let mut planner = self.state.session(session_id).expect("checked above").planner.clone();
        let tx = self.commands.clone();
        let id = run_id.clone();
        std::thread::spawn(move || {
            // Report once per finished breadth-first round.
            let rounds = Mutex::new(0usize);
            let progress_tx = tx.clone();
            let progress_id = id.clone();
            let observe = move |p: &RunProgress| {
                let round = p.per_strategy.values().map(|c| c.completed).min().unwrap_or(0);
                let mut last = rounds.lock().expect("round counter lock");
                if round > *last {
                    *last = round;
                    let _ = progress_tx.send(Command::Progress { run_id: progress_id.clone(), progress: p.clone() });
                }
            };
            let outcome = match planner.replan(trigger, &[], &[], 0.0, Some(&observe)) {
                Ok(plan) => RunOutcome::Plan { plan: Box::new(plan.clone()) },
                Err(e) => RunOutcome::Failed { message: e.to_string() },
            };
            let _ = tx.send(Command::Finish { run_id: id, outcome });
        });
        Ok((run_id, written))
    }
}

impl Service {
    /// Open the log in `data_dir`, replay it, and start the writer. Runs
    /// left unfinished by a previous process are closed as failed.
    pub fn start(domain: Domain, data_dir: &Path) -> Result<Self, ServiceError> {
        let log_path = data_dir.join(LOG_FILE);
        let (log, records) = EventLog::open(&log_path)?;
        let state = ServerState::replay(Arc::new(domain), &records)?;
        let stale: Vec<String> =
            state.runs().filter(|r| r.phase == RunPhase::Running).map(|r| r.run_id.clone()).collect();
        let state = Arc::new(state);
        let (publish, snapshot) = watch::channel(state.clone());
        let events = Arc::new(RwLock::new(records));
        let (commands, mut rx) = mpsc::unbounded_channel();
        let mut writer = Writer { log, state, publish, events: events.clone(), commands: commands.clone() };
        for run_id in stale {
            let message = "interrupted by a restart".to_string();
            writer.commit(vec![Event::PlanComputed { run_id, outcome: RunOutcome::Failed { message } }])?;
        }
        std::thread::Builder::new()
            .name("event-writer".into())
            .spawn(move || {
                while let Some(cmd) = rx.blocking_recv() {
                    writer.handle(cmd);
                }
            })
            .expect("spawn writer thread");
        Ok(Self { commands, snapshot, events, log_path })
    }

    pub fn snapshot(&self) -> Arc<ServerState> {
        self.snapshot.borrow().clone()
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    async fn append<F>(&self, build: F) -> Result<Vec<EventRecord>, ServiceError>
    where
        F: FnOnce(&ServerState) -> Result<Vec<Event>, StateError> + Send + 'static,
    {
        let (reply, rx) = oneshot::channel();
        self.commands.send(Command::Append { build: Box::new(build), reply }).map_err(|_| ServiceError::Stopped)?;
        rx.await.map_err(|_| ServiceError::Stopped)?
    }

    /// Queue new reports as PENDING.
    pub async fn ingest(&self, reports: Vec<CitizenReport>) -> Result<Vec<EventRecord>, ServiceError> {
        self.append(move |_| {
            Ok(reports
                .into_iter()
                .map(|mut report| {
                    report.status = ReportStatus::Pending;
                    report.reviewer = None;
                    Event::ReportIngested { report }
                })
                .collect())
        })
        .await
    }

    pub async fn review(&self, report_id: String, decision: Decision, reviewer: String) -> Result<EventRecord, ServiceError> {
        let mut out = self.append(move |_| Ok(vec![Event::ReportReviewed { report_id, decision, reviewer }])).await?;
        Ok(out.remove(0))
    }

    pub async fn create_session(&self) -> Result<EventRecord, ServiceError> {
        let mut out = self.append(|s| Ok(vec![Event::SessionCreated { session_id: s.next_session_id() }])).await?;
        Ok(out.remove(0))
    }

    /// Start a planning cycle; returns the run id once `RUN_STARTED` is
    /// durable. The evaluation continues in the background.
    pub async fn replan(&self, session_id: String, trigger: ReplanTrigger) -> Result<(String, Vec<EventRecord>), ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.commands.send(Command::Replan { session_id, trigger, reply }).map_err(|_| ServiceError::Stopped)?;
        rx.await.map_err(|_| ServiceError::Stopped)?
    }

    pub async fn commit(&self, session_id: String, strategy_id: StrategyId) -> Result<EventRecord, ServiceError> {
        let mut out = self.append(move |_| Ok(vec![Event::StrategyCommitted { session_id, strategy_id }])).await?;
        Ok(out.remove(0))
    }

    pub fn events_since(&self, since: u64, limit: usize) -> Vec<EventRecord> {
        let events = self.events.read().expect("event list lock");
        let start = (since as usize).min(events.len());
        events[start..].iter().take(limit).cloned().collect()
    }

    /// Events after `since`, waiting up to `timeout` for the first one.
    pub async fn wait_events(&self, since: u64, limit: usize, timeout: Duration) -> Vec<EventRecord> {
        let mut rx = self.snapshot.clone();
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            rx.borrow_and_update();
            let batch = self.events_since(since, limit);
            if !batch.is_empty() {
                return batch;
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => continue,
                _ => return Vec::new(),
            }
        }
    }
}
