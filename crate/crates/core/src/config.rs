//! Run configuration documents shared by the command line and the service.
//!
//! A configuration is a JSON document. Raster paths are resolved against the
//! directory holding the document, and `key=value` overrides address fields
//! by dotted path (`design.n=32`, `weights.2=0.5`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::{json_digest, sha256_hex};
use crate::ensemble::{
    enumerate_factorial, sample_lhs, sample_monte_carlo, EnsembleDesign, EnsembleError, UncertaintySpace,
    DEFAULT_DESIGN_CAP,
};
use crate::fusion::{FusionError, IgnitionBelief};
use crate::hazard::{FireState, ForcingSeries, HazardError, ParameterVector};
use crate::polfc::{CandidateSource, CandidateTemplates, ModelSetup, PlanningConfig, PolfcError, SelectionPolicy};
use crate::raster::{Cell, RasterError, RasterGrid};
use crate::sched::ComputeBudget;
use crate::units::Unit;
use crate::CriteriaRegistry;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("bad override '{assignment}': {message}")]
    Override { assignment: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Raster { path: PathBuf, source: RasterError },
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Polfc(#[from] PolfcError),
}

/// Wind for one forecast member: constant over the horizon, or per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ForcingSpec {
    Uniform { u: f64, v: f64 },
    Series(ForcingSeries),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DesignSpec {
    FullFactorial {
        levels: usize,
        #[serde(default = "default_cap")]
        cap: usize,
    },
    Lhs {
        n: usize,
    },
    MonteCarlo {
        n: usize,
    },
}

fn default_cap() -> usize {
    DEFAULT_DESIGN_CAP
}

fn default_min_coverage() -> f64 {
    0.3
}

fn default_workers() -> usize {
    4
}

fn default_deadline_ms() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// ESRI ASCII fuel-factor raster; cells with factor 0 or nodata cannot burn.
    pub fuel: PathBuf,
    /// Optional raster, non-zero cells are assets at risk.
    #[serde(default)]
    pub asset_mask: Option<PathBuf>,
    /// Cells burning at `t_begin`; empty means the fire has not been
    /// located and each scenario draws its ignition from the belief.
    #[serde(default)]
    pub ignition: Vec<Cell>,
    #[serde(default)]
    pub t_begin: u32,
    pub t_end: u32,
    pub p0: f64,
    pub cw: f64,
    pub tau_burn: u32,
    /// Forecast member id → wind.
    pub forcing: BTreeMap<String, ForcingSpec>,
    pub uncertainty: UncertaintySpace,
    pub design: DesignSpec,
    #[serde(default)]
    pub candidates: CandidateTemplates,
    /// Weighted-sum selection weights, one per criterion.
    pub weights: Vec<f64>,
    pub budget_eur: f64,
    #[serde(default = "default_deadline_ms")]
    pub deadline_ms: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub task_timeout_ms: Option<u64>,
    #[serde(default = "default_min_coverage")]
    pub min_coverage: f64,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A configuration as read from disk, with its digest.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Digest of the document after overrides, before path resolution.
    pub digest: String,
    pub document: Value,
}

/// Everything a planning cycle needs, built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Domain {
    pub config: RunConfig,
    pub model: ModelSetup,
    pub design: EnsembleDesign,
    pub initial: FireState,
    pub prior: IgnitionBelief,
    /// Input file name → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
}

/// Provenance block attached to every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, loaded: &LoadedConfig, domain: &Domain) -> Self {
        Self {
            tool: "hazardline".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_digest: loaded.digest.clone(),
            seed: loaded.config.seed,
            inputs: domain.inputs.clone(),
        }
    }
}

/// Set the field at a dotted path to `value` (parsed as JSON, else taken as
/// a string). Intermediate objects are created as needed.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let bad = |m: &str| ConfigError::Override { assignment: assignment.into(), message: m.into() };
    let (key, raw) = assignment.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(bad("empty key segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut node = doc;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| bad(&format!("'{seg}' is not an array index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| bad(&format!("index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad(&format!("'{seg}' addresses into a scalar"))),
        };
    }
    unreachable!("the last segment always returns")
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

impl RunConfig {
    /// Parse `path`, apply overrides, and resolve relative raster paths.
    pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
        let text = read_text(path)?;
        let mut document: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut document, o)?;
        }
        let digest = json_digest(&document);
        let mut config: RunConfig =
            serde_json::from_value(document.clone()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.fuel = resolve(base, &config.fuel);
        config.asset_mask = config.asset_mask.as_deref().map(|p| resolve(base, p));
        config.output_dir = config.output_dir.as_deref().map(|p| resolve(base, p));
        config.validate()?;
        Ok(LoadedConfig { config, digest, document })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.t_end < self.t_begin {
            return invalid(format!("t_end {} precedes t_begin {}", self.t_end, self.t_begin));
        }
        let n = CriteriaRegistry::standard().len();
        if self.weights.len() != n {
            return invalid(format!("weights has {} entries, there are {n} criteria", self.weights.len()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return invalid(format!("weight {w} must be finite and >= 0"));
        }
        if !(self.budget_eur >= 0.0 && self.budget_eur.is_finite()) {
            return invalid(format!("budget_eur {} must be >= 0", self.budget_eur));
        }
        if self.workers == 0 {
            return invalid("workers must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return invalid(format!("min_coverage {} outside [0, 1]", self.min_coverage));
        }
        for m in &self.uncertainty.members {
            if !self.forcing.contains_key(&m.id) {
                return invalid(format!("no forcing for forecast member {}", m.id));
            }
        }
        self.uncertainty.validate()?;
        self.candidates.validate()?;
        Ok(())
    }

    pub fn compute_budget(&self) -> ComputeBudget {
        ComputeBudget {
            deadline: Duration::from_millis(self.deadline_ms),
            workers: self.workers,
            task_timeout: self.task_timeout_ms.map(Duration::from_millis),
        }
    }

    pub fn planning_config(&self) -> PlanningConfig {
        PlanningConfig {
            t_begin: self.t_begin,
            budget_eur: self.budget_eur,
            candidates: CandidateSource::Templates(self.candidates.clone()),
            compute: self.compute_budget(),
            min_coverage: self.min_coverage,
            selection: Some(SelectionPolicy::WeightedSum { weights: self.weights.clone() }),
        }
    }

    pub fn build_design(&self) -> Result<EnsembleDesign, ConfigError> {
        Ok(match self.design {
            DesignSpec::FullFactorial { levels, cap } => enumerate_factorial(&self.uncertainty, levels, self.seed, cap)?,
            DesignSpec::Lhs { n } => sample_lhs(&self.uncertainty, n, self.seed)?,
            DesignSpec::MonteCarlo { n } => sample_monte_carlo(&self.uncertainty, n, self.seed)?,
        })
    }

    /// Read the rasters and assemble model, design and initial state.
    /// Nothing is written.
    pub fn build(&self) -> Result<Domain, ConfigError> {
        let mut inputs = BTreeMap::new();
        let raster = |path: &Path, inputs: &mut BTreeMap<String, String>| -> Result<RasterGrid, ConfigError> {
            let text = read_text(path)?;
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            inputs.insert(name, sha256_hex(text.as_bytes()));
            RasterGrid::parse_esri_ascii(&text, Unit::Dimensionless)
                .map_err(|source| ConfigError::Raster { path: path.to_path_buf(), source })
        };
        let fuel = raster(&self.fuel, &mut inputs)?;
        let g = fuel.geometry;
        let asset_mask = match &self.asset_mask {
            Some(path) => {
                let mask = raster(path, &mut inputs)?;
                mask.geometry.ensure_same(&g).map_err(|source| ConfigError::Raster { path: path.clone(), source })?;
                Some(mask.data().iter().map(|&v| !mask.values.is_nodata(v) && v != 0.0).collect())
            }
            None => None,
        };
        let len = self.t_end as usize;
        let forcing = self
            .forcing
            .iter()
            .map(|(id, spec)| {
                let series = match spec {
                    ForcingSpec::Uniform { u, v } => ForcingSeries::uniform(*u, *v, len),
                    ForcingSpec::Series(s) => s.clone(),
                };
                if series.len() < len {
                    return Err(ConfigError::Invalid(format!(
                        "forcing {id} has {} steps, the horizon needs {len}",
                        series.len()
                    )));
                }
                Ok((id.clone(), series))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        let base = ParameterVector { p0: self.p0, cw: self.cw, tau_burn: self.tau_burn, fuel: fuel.into() };
        base.validate()?;
        let model = ModelSetup { base, forcing, asset_mask, criteria: CriteriaRegistry::standard(), t_end: self.t_end };

        let fresh = FireState::from_fuel(&model.base.fuel);
        let mut initial = FireState::new(g, fresh.cells().to_vec(), fresh.remaining().to_vec(), self.t_begin)?;
        if let Some(c) = self.ignition.iter().find(|c| !g.contains(**c)) {
            return Err(ConfigError::Invalid(format!("ignition cell ({}, {}) is outside the grid", c.row, c.col)));
        }
        initial.ignite(&self.ignition, self.tau_burn)?;
        let prior = IgnitionBelief::from_state(&initial)?;
        let design = self.build_design()?;
        model.validate(&design)?;
        Ok(Domain { config: self.clone(), model, design, initial, prior, inputs })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() { base.join(p) } else { p.to_path_buf() }
}
