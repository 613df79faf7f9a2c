//! Citizen reports, remote sensing and the ignition-location belief.
//!
//! Reports enter a review queue as `PENDING` and only reach the belief after
//! a human reviewer accepts them. The belief is a single-event location
//! posterior over burnable cells, updated by multiplying per-evidence
//! likelihoods:
//!
//! ```text
//! L_r(c) = (1 − conf) / |burnable| + conf · G(c; x_r, y_r, σ_r)
//! L_o(c) = ε + (1 − ε) · D_o(c)          ε = 0.01
//! ```
//!
//! `G` is an isotropic Gaussian evaluated at cell centers and normalized
//! over the burnable cells.

use serde::{Deserialize, Serialize};

use crate::digest::Hasher;
use crate::hazard::{CellState, FireState};
use crate::raster::{Cell, GridGeometry, RasterError, RasterGrid};
use crate::units::Unit;

pub const OBSERVATION_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportStatus {
    #[default]
    Pending,
    Accepted,
    Rejected,
}

impl ReportStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PENDING" => Some(Self::Pending),
            "ACCEPTED" => Some(Self::Accepted),
            "REJECTED" => Some(Self::Rejected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitizenReport {
    pub id: String,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub sigma_m: f64,
    pub phenomenon: String,
    pub confidence: f64,
    #[serde(default)]
    pub status: ReportStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
}

impl CitizenReport {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::Malformed { id: self.id.clone(), message: m });
        if self.id.trim().is_empty() {
            return bad("empty id".into());
        }
        if !(self.t.is_finite() && self.x.is_finite() && self.y.is_finite()) {
            return bad("t, x and y must be finite".into());
        }
        if !(self.sigma_m > 0.0 && self.sigma_m.is_finite()) {
            return bad(format!("sigma_m {} must be positive", self.sigma_m));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return bad(format!("confidence {} outside (0, 1]", self.confidence));
        }
        Ok(())
    }
}

/// Parse newline-delimited JSON reports. Blank lines are ignored; every
/// report must validate and be `PENDING`.
pub fn parse_reports_ndjson(text: &str) -> Result<Vec<CitizenReport>, FusionError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let report: CitizenReport =
            serde_json::from_str(line).map_err(|e| FusionError::Ndjson { line: i + 1, message: e.to_string() })?;
        report.validate()?;
        if report.status != ReportStatus::Pending {
            return Err(FusionError::Malformed { id: report.id, message: "new reports must be PENDING".into() });
        }
        out.push(report);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReviewQueue {
    reports: Vec<CitizenReport>,
}

impl ReviewQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a pending report; returns its position in ingest order.
    pub fn ingest(&mut self, report: CitizenReport) -> Result<usize, FusionError> {
        report.validate()?;
        if report.status != ReportStatus::Pending {
            return Err(FusionError::Malformed { id: report.id, message: "new reports must be PENDING".into() });
        }
        if self.get(&report.id).is_some() {
            return Err(FusionError::DuplicateReport(report.id));
        }
        self.reports.push(report);
        Ok(self.reports.len() - 1)
    }

    pub fn review(&mut self, id: &str, decision: Decision, reviewer: &str) -> Result<&CitizenReport, FusionError> {
        let report = self.reports.iter_mut().find(|r| r.id == id).ok_or_else(|| FusionError::UnknownReport(id.into()))?;
        if report.status != ReportStatus::Pending {
            return Err(FusionError::AlreadyReviewed { id: id.into(), status: report.status });
        }
        report.status = match decision {
            Decision::Accept => ReportStatus::Accepted,
            Decision::Reject => ReportStatus::Rejected,
        };
        report.reviewer = Some(reviewer.into());
        Ok(report)
    }

    pub fn get(&self, id: &str) -> Option<&CitizenReport> {
        self.reports.iter().find(|r| r.id == id)
    }

    pub fn reports(&self) -> &[CitizenReport] {
        &self.reports
    }

    pub fn with_status(&self, status: ReportStatus) -> impl Iterator<Item = &CitizenReport> {
        self.reports.iter().filter(move |r| r.status == status)
    }

    /// Accepted reports the belief has not incorporated yet.
    pub fn unassimilated<'a>(&'a self, belief: &'a IgnitionBelief) -> Vec<CitizenReport> {
        self.with_status(ReportStatus::Accepted)
            .filter(|r| !belief.has_incorporated(&report_key(&r.id)))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSensingObservation {
    pub id: String,
    pub acquired: f64,
    pub available: f64,
    /// Per-cell detection value in `[0, 1]`; nodata cells carry no information.
    pub detection: RasterGrid,
}

impl RemoteSensingObservation {
    pub fn validate(&self, geometry: &GridGeometry) -> Result<(), FusionError> {
        if self.available.partial_cmp(&self.acquired).is_none_or(|o| o.is_lt()) {
            return Err(FusionError::Malformed {
                id: self.id.clone(),
                message: format!("available {} precedes acquisition {}", self.available, self.acquired),
            });
        }
        self.detection.geometry.ensure_same(geometry).map_err(|e| FusionError::GridMismatch(format!("{}: {e}", self.id)))?;
        if let Some(v) = self.detection.values.data().find(|v| !(0.0..=1.0).contains(v)) {
            return Err(FusionError::Malformed { id: self.id.clone(), message: format!("detection value {v} outside [0, 1]") });
        }
        Ok(())
    }

    fn likelihood(&self, index: usize) -> f64 {
        let v = self.detection.data()[index];
        if self.detection.values.is_nodata(v) {
            1.0
        } else {
            OBSERVATION_FLOOR + (1.0 - OBSERVATION_FLOOR) * v
        }
    }
}

fn report_key(id: &str) -> String {
    format!("report:{id}")
}

fn observation_key(id: &str) -> String {
    format!("obs:{id}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnitionBelief {
    pub geometry: GridGeometry,
    burnable: Vec<bool>,
    posterior: Vec<f64>,
    generation: u64,
    incorporated: Vec<String>,
}

impl IgnitionBelief {
    /// Uniform prior over the burnable cells.
    pub fn uniform(geometry: GridGeometry, burnable: Vec<bool>) -> Result<Self, FusionError> {
        if burnable.len() != geometry.len() {
            return Err(FusionError::GridMismatch(format!(
                "mask has {} cells, grid has {}",
                burnable.len(),
                geometry.len()
            )));
        }
        let n = burnable.iter().filter(|b| **b).count();
        if n == 0 {
            return Err(FusionError::NoBurnableCells);
        }
        let p = 1.0 / n as f64;
        let posterior = burnable.iter().map(|&b| if b { p } else { 0.0 }).collect();
        Ok(Self { geometry, burnable, posterior, generation: 0, incorporated: Vec::new() })
    }

    pub fn from_state(state: &FireState) -> Result<Self, FusionError> {
        let mask = state.cells().iter().map(|c| *c != CellState::Unburnable).collect();
        Self::uniform(*state.geometry(), mask)
    }

    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    pub fn probability(&self, cell: Cell) -> f64 {
        self.posterior[self.geometry.index(cell)]
    }

    pub fn burnable(&self) -> &[bool] {
        &self.burnable
    }

    pub fn burnable_count(&self) -> usize {
        self.burnable.iter().filter(|b| **b).count()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn incorporated(&self) -> &[String] {
        &self.incorporated
    }

    pub fn has_incorporated(&self, key: &str) -> bool {
        self.incorporated.binary_search_by(|k| k.as_str().cmp(key)).is_ok()
    }

    /// Highest-probability cell, ties broken by `(row, col)`.
    pub fn mode(&self) -> Cell {
        extract_ignitions(self, ExtractionPolicy::TopK { k: 1 })[0].0
    }

    pub fn total(&self) -> f64 {
        self.posterior.iter().sum()
    }

    pub fn check_invariants(&self) -> Result<(), FusionError> {
        let total = self.total();
        if (total - 1.0).abs() > 1e-9 {
            return Err(FusionError::Degenerate(format!("posterior sums to {total}")));
        }
        if self.posterior.iter().zip(&self.burnable).any(|(p, b)| !b && *p != 0.0 || p.partial_cmp(&0.0).is_none_or(|o| o.is_lt())) {
            return Err(FusionError::Degenerate("mass on unburnable cell or negative probability".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let mut h = Hasher::new();
        h.str("ignition-belief")
            .u64(self.geometry.nrows as u64)
            .u64(self.geometry.ncols as u64)
            .f64(self.geometry.cellsize)
            .f64(self.geometry.xllcorner)
            .f64(self.geometry.yllcorner)
            .u64(self.generation)
            .f64s(&self.posterior);
        for b in &self.burnable {
            h.u64(*b as u64);
        }
        for id in &self.incorporated {
            h.str(id);
        }
        h.finish()
    }

    pub fn to_raster(&self) -> RasterGrid {
        RasterGrid::new(self.geometry, Unit::Dimensionless, self.posterior.clone())
            .expect("posterior matches its own geometry")
    }

    /// Normalized Gaussian geoparsing kernel of a report over burnable cells.
    fn kernel(&self, report: &CitizenReport) -> Vec<f64> {
        let two_s2 = 2.0 * report.sigma_m * report.sigma_m;
        let log: Vec<f64> = self
            .geometry
            .cells()
            .map(|cell| {
                let (cx, cy) = self.geometry.center(cell);
                let d2 = (cx - report.x).powi(2) + (cy - report.y).powi(2);
                -d2 / two_s2
            })
            .collect();
        // Shift by the maximum so a distant report never underflows to zero.
        let max = log
            .iter()
            .zip(&self.burnable)
            .filter(|(_, b)| **b)
            .map(|(l, _)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        let g: Vec<f64> =
            log.iter().zip(&self.burnable).map(|(l, &b)| if b { (l - max).exp() } else { 0.0 }).collect();
        let total: f64 = g.iter().sum();
        g.into_iter().map(|v| v / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ExtractionPolicy {
    TopK { k: usize },
    Threshold { p: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("malformed evidence {id}: {message}")]
    Malformed { id: String, message: String },
    #[error("line {line}: {message}")]
    Ndjson { line: usize, message: String },
    #[error("duplicate report id {0}")]
    DuplicateReport(String),
    #[error("unknown report id {0}")]
    UnknownReport(String),
    #[error("report {id} was already reviewed ({status:?})")]
    AlreadyReviewed { id: String, status: ReportStatus },
    #[error("evidence {0} is already incorporated")]
    AlreadyIncorporated(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("the grid has no burnable cell")]
    NoBurnableCells,
    #[error("degenerate posterior: {0}")]
    Degenerate(String),
}

impl From<RasterError> for FusionError {
    fn from(e: RasterError) -> Self {
        FusionError::GridMismatch(e.to_string())
    }
}

/// Assimilate accepted reports and observations available at `now`.
///
/// Reports that are not `ACCEPTED` and observations whose availability lies
/// after `now` are ignored. Evidence is applied in a canonical order (by
/// key), so the result does not depend on the order of the inputs. Without
/// usable evidence the belief is returned unchanged.
pub fn update_belief(
    belief: &IgnitionBelief,
    reports: &[CitizenReport],
    observations: &[RemoteSensingObservation],
    now: f64,
) -> Result<IgnitionBelief, FusionError> {
    enum Evidence<'a> {
        Report(&'a CitizenReport),
        Observation(&'a RemoteSensingObservation),
    }
    let mut evidence: Vec<(String, Evidence)> = Vec::new();
    for r in reports.iter().filter(|r| r.status == ReportStatus::Accepted) {
        r.validate()?;
        evidence.push((report_key(&r.id), Evidence::Report(r)));
    }
    for o in observations.iter().filter(|o| o.available <= now) {
        o.validate(&belief.geometry)?;
        evidence.push((observation_key(&o.id), Evidence::Observation(o)));
    }
    if evidence.is_empty() {
        return Ok(belief.clone());
    }
    evidence.sort_by(|a, b| a.0.cmp(&b.0));
    for (i, (key, _)) in evidence.iter().enumerate() {
        if belief.has_incorporated(key) || (i > 0 && evidence[i - 1].0 == *key) {
            return Err(FusionError::AlreadyIncorporated(key.clone()));
        }
    }

    let uniform = 1.0 / belief.burnable_count() as f64;
    let mut posterior = belief.posterior.clone();
    for (_, e) in &evidence {
        match e {
            Evidence::Report(r) => {
                let g = belief.kernel(r);
                for (p, gc) in posterior.iter_mut().zip(g) {
                    *p *= (1.0 - r.confidence) * uniform + r.confidence * gc;
                }
            }
            Evidence::Observation(o) => {
                for (i, p) in posterior.iter_mut().enumerate() {
                    *p *= o.likelihood(i);
                }
            }
        }
        // Renormalize after each factor to keep magnitudes in range.
        let total: f64 = posterior.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(FusionError::Degenerate("evidence leaves no probability mass".into()));
        }
        for (p, &b) in posterior.iter_mut().zip(&belief.burnable) {
            *p = if b { *p / total } else { 0.0 };
        }
    }

    let mut incorporated = belief.incorporated.clone();
    incorporated.extend(evidence.into_iter().map(|(k, _)| k));
    incorporated.sort();
    Ok(IgnitionBelief {
        geometry: belief.geometry,
        burnable: belief.burnable.clone(),
        posterior,
        generation: belief.generation + 1,
        incorporated,
    })
}

/// Candidate ignition cells sorted by probability descending, then
/// `(row, col)` ascending. Zero-probability cells are never returned.
pub fn extract_ignitions(belief: &IgnitionBelief, policy: ExtractionPolicy) -> Vec<(Cell, f64)> {
    let mut cells: Vec<(Cell, f64)> = belief
        .geometry
        .cells()
        .zip(belief.posterior.iter().copied())
        .filter(|(_, p)| *p > 0.0)
        .collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    match policy {
        ExtractionPolicy::TopK { k } => cells.truncate(k),
        ExtractionPolicy::Threshold { p } => cells.retain(|(_, q)| *q >= p),
    }
    cells
}
