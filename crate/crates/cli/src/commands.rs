//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

use hazardline_core::config::{ConfigError, Domain, LoadedConfig, Provenance, RunConfig};
use hazardline_core::digest::sha256_hex;
use hazardline_core::hazard::dtm;
use hazardline_core::polfc::{ControlStrategy, PlanningSession, PolfcError, ReplanTrigger, Situation};
use hazardline_core::raster::RasterGrid;
use hazardline_core::sched::RunStatus;
use hazardline_core::semap::{compose, run_pipeline, PipelineDocument, RunMode};
use hazardline_core::Unit;
use hazardline_server::events::read_log;
use hazardline_server::ServerState;

use crate::output::Staged;
use crate::{CliError, ConfigArgs};

fn load(args: &ConfigArgs) -> Result<(LoadedConfig, Domain), CliError> {
    let loaded = RunConfig::load(&args.config, &args.set)?;
    let domain = loaded.config.build()?;
    Ok((loaded, domain))
}

fn model_error(e: PolfcError) -> CliError {
    CliError::Model(e.to_string())
}

fn default_out(loaded: &LoadedConfig, name: &str) -> PathBuf {
    loaded.config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")).join(name)
}

fn situation(domain: &Domain) -> Situation<'_> {
    Situation { model: &domain.model, observed: &domain.initial, belief: &domain.prior }
}

pub fn simulate(args: &ConfigArgs, scenario: u32, horizon: Option<u32>, out: Option<PathBuf>) -> Result<(), CliError> {
    let (loaded, domain) = load(args)?;
    let n = domain.design.scenarios.len();
    let sc = domain
        .design
        .scenarios
        .get(scenario as usize)
        .ok_or_else(|| CliError::Validation(format!("scenario e{scenario} is not in the design ({n} scenarios)")))?;
    let remaining = domain.model.t_end - domain.initial.t();
    let horizon = horizon.unwrap_or(remaining);
    if horizon > remaining {
        return Err(CliError::Validation(format!("horizon {horizon} runs past t_end ({remaining} steps remain)")));
    }
    let traj = situation(&domain).trajectory(&ControlStrategy::null(), sc, horizon).map_err(model_error)?;

    let dest = out.unwrap_or_else(|| default_out(&loaded, &format!("simulate-e{scenario}")));
    let mut staged = Staged::new(&dest)?;
    let area = domain.initial.geometry().cellsize.powi(2);
    let mut series = String::from("t,burning_cells,burned_cells,affected_area_m2\n");
    let mut steps = Vec::new();
    for s in &traj.states {
        let file = format!("state_t{:04}.asc", s.t());
        staged.write(&file, s.to_raster().to_esri_ascii().as_bytes())?;
        let affected = s.burning_count() + s.burned_count();
        let _ = writeln!(series, "{},{},{},{}", s.t(), s.burning_count(), s.burned_count(), affected as f64 * area);
        steps.push(json!({"t": s.t(), "file": file, "state_digest": s.digest()}));
    }
    staged.write("burned_area.csv", series.as_bytes())?;
    let manifest = json!({
        "provenance": Provenance::new("simulate", &loaded, &domain),
        "scenario": sc,
        "strategy": "null",
        "horizon": horizon,
        "steps": steps,
        "files": staged.digests(),
    });
    staged.write_json("manifest.json", &manifest)?;
    let dest = staged.commit()?;
    println!("wrote {} states to {}", traj.states.len(), dest.display());
    Ok(())
}

pub fn ensemble(args: &ConfigArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let (loaded, domain) = load(args)?;
    let g = *domain.initial.geometry();
    let remaining = domain.model.t_end - domain.initial.t();
    let null = ControlStrategy::null();
    let mut probability = vec![0.0; g.len()];
    let mut expected = 0.0;
    let mut rows = Vec::new();
    for sc in &domain.design.scenarios {
        let traj = situation(&domain).trajectory(&null, sc, remaining).map_err(model_error)?;
        let last = traj.last();
        let affected = last.cells().iter().filter(|c| c.is_affected()).count();
        for (p, c) in probability.iter_mut().zip(last.cells()) {
            if c.is_affected() {
                *p += sc.weight;
            }
        }
        expected += sc.weight * affected as f64;
        rows.push(json!({
            "scenario": sc,
            "affected_cells": affected,
            "burned_cells": last.burned_count(),
            "final_digest": last.digest(),
        }));
    }
    let raster = RasterGrid::new(g, Unit::Dimensionless, probability).map_err(|e| CliError::Model(e.to_string()))?;

    let dest = out.unwrap_or_else(|| default_out(&loaded, "ensemble"));
    let mut staged = Staged::new(&dest)?;
    staged.write("burn_probability.asc", raster.to_esri_ascii().as_bytes())?;
    let doc = json!({
        "provenance": Provenance::new("ensemble", &loaded, &domain),
        "design_id": domain.design.design_id(),
        "method": domain.design.method,
        "t_end": domain.model.t_end,
        "expected_affected_cells": expected,
        "expected_affected_area_m2": expected * g.cellsize * g.cellsize,
        "scenarios": rows,
        "files": staged.digests(),
    });
    staged.write_json("ensemble.json", &doc)?;
    let dest = staged.commit()?;
    println!("ran {} scenarios; wrote {}", domain.design.scenarios.len(), dest.display());
    Ok(())
}

pub fn plan(args: &ConfigArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let (loaded, domain) = load(args)?;
    let weights = loaded.config.weights.clone();
    let mut session = PlanningSession::new(
        loaded.config.planning_config(),
        domain.model.clone(),
        domain.design.clone(),
        domain.initial.clone(),
        domain.prior.clone(),
    )
    .map_err(model_error)?;
    let plan = session.replan(ReplanTrigger::Operator, &[], &[], 0.0, None).map_err(model_error)?;

    let entries: Vec<Value> = plan
        .result
        .entries
        .iter()
        .map(|(id, e)| {
            let s = plan.strategy(*id);
            json!({
                "strategy_id": id,
                "label": s.map(|s| s.label.as_str()).unwrap_or(""),
                "actions": s.map(|s| &s.actions),
                "resource_cost_eur": s.map(|s| s.total_resource_cost),
                "expected": e.expected,
                "scalarized": e.expected.weighted_sum(&weights),
                "covered_fraction": e.covered_fraction,
                "low_confidence": e.low_confidence,
                "on_front": plan.front.contains(*id),
            })
        })
        .collect();
    let status = match plan.progress.status {
        RunStatus::DeadlinePartial => "DEADLINE_PARTIAL",
        _ => "COMPLETED",
    };
    // Timings are left out so repeated runs produce identical files.
    let doc = json!({
        "provenance": Provenance::new("plan", &loaded, &domain),
        "status": status,
        "trigger": plan.trigger,
        "horizon": plan.horizon,
        "criteria": plan.result.criteria,
        "weights": weights,
        "budget_eur": loaded.config.budget_eur,
        "coverage": {"completed": plan.progress.completed, "total": plan.progress.total},
        "selected": plan.selected,
        "selected_label": plan.selected_strategy().map(|s| s.label.as_str()),
        "front": plan.front.members,
        "entries": entries,
        "result_provenance": plan.result.provenance,
        "plan_digest": plan.digest(),
    });
    let dest = out.unwrap_or_else(|| default_out(&loaded, "plan"));
    let mut staged = Staged::new(&dest)?;
    staged.write_json("plan.json", &doc)?;
    let dest = staged.commit()?;
    println!(
        "{status}: selected {} of {} strategies; wrote {}",
        doc["selected_label"].as_str().unwrap_or("none"),
        plan.result.entries.len(),
        dest.display()
    );
    Ok(())
}

pub fn serve(args: &ConfigArgs, host: &str, port: u16, data_dir: &Path) -> Result<(), CliError> {
    let (_, domain) = load(args)?;
    let addr: SocketAddr =
        format!("{host}:{port}").parse().map_err(|e| CliError::Validation(format!("bad listen address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::io(data_dir))?;
    runtime.block_on(hazardline_server::serve(domain, data_dir, addr))?;
    Ok(())
}

/// A document with `modules` is a pipeline; anything else is a run
/// configuration.
pub fn validate(path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    if doc.get("modules").is_some() {
        validate_pipeline(&text)
    } else {
        validate_run_config(path, overrides)
    }
}

fn validate_pipeline(text: &str) -> Result<(), CliError> {
    let doc = PipelineDocument::from_json(text).map_err(|e| CliError::Validation(e.to_string()))?;
    let pipeline = match compose(&doc.graph, &dtm::registry()) {
        Ok(p) => p,
        Err(e) => {
            println!("FAIL compose: {e}");
            return Err(CliError::Validation(format!("composition failed: {e}")));
        }
    };
    println!("ok   compose: {}", pipeline.order().join(" -> "));
    if doc.inputs.is_empty() {
        return Ok(());
    }
    let run = match run_pipeline(&pipeline, &doc.inputs, RunMode::Audit) {
        Ok(run) => run,
        Err(e) => {
            println!("FAIL run: {e}");
            return Err(CliError::Validation(format!("audit run failed: {e}")));
        }
    };
    for f in &run.failures {
        println!("{:<4} {} {}/{}: {}", format!("{:?}", f.severity).to_uppercase(), f.phase, f.module_id, f.check_id, f.message);
    }
    let fatal = run.fatal_failures().count();
    if fatal > 0 {
        return Err(CliError::Validation(format!("{fatal} fatal check failure(s)")));
    }
    println!("ok   audit: {} modules, {} warnings", run.trace.executed().len(), run.failures.len());
    Ok(())
}

fn validate_run_config(path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let semantic = |e: ConfigError| match e {
        ConfigError::Io { .. } | ConfigError::Parse(_) | ConfigError::Override { .. } | ConfigError::Raster { .. } => {
            CliError::Config(e)
        }
        other => CliError::Validation(other.to_string()),
    };
    let loaded = RunConfig::load(path, overrides).map_err(semantic)?;
    let domain = loaded.config.build().map_err(semantic)?;
    println!(
        "ok   run config: {}x{} grid, {} scenarios, t {}..{}, digest {}",
        domain.initial.geometry().nrows,
        domain.initial.geometry().ncols,
        domain.design.scenarios.len(),
        loaded.config.t_begin,
        loaded.config.t_end,
        loaded.digest
    );
    Ok(())
}

pub fn replay(log: &Path, config: Option<&Path>, overrides: &[String]) -> Result<(), CliError> {
    let bytes = std::fs::read(log).map_err(CliError::io(log))?;
    let records = read_log(log)?;
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        *kinds.entry(r.event.kind()).or_default() += 1;
    }
    let mut summary = json!({
        "log": log.display().to_string(),
        "log_sha256": sha256_hex(&bytes),
        "last_seq": records.len(),
        "events": kinds,
    });
    if let Some(config) = config {
        let loaded = RunConfig::load(config, overrides)?;
        let domain = loaded.config.build()?;
        let state = ServerState::replay(Arc::new(domain), &records).map_err(|e| CliError::Validation(e.to_string()))?;
        let sessions: Vec<Value> = state.sessions().map(|s| json!(state.summary(s))).collect();
        let runs: Vec<Value> = state
            .runs()
            .map(|r| {
                json!({
                    "run_id": r.run_id,
                    "session_id": r.session_id,
                    "phase": r.phase,
                    "selected": r.plan.as_ref().and_then(|p| p.selected),
                    "plan_digest": r.plan.as_ref().map(|p| p.digest()),
                    "error": r.error,
                })
            })
            .collect();
        let mut reports: BTreeMap<String, usize> = BTreeMap::new();
        for r in state.queue().reports() {
            *reports.entry(json!(r.status).as_str().unwrap_or("?").to_string()).or_default() += 1;
        }
        summary["config_digest"] = json!(loaded.digest);
        summary["state_digest"] = json!(state.digest());
        summary["belief"] = json!({"generation": state.belief().generation(), "digest": state.belief().digest()});
        summary["reports"] = json!(reports);
        summary["sessions"] = json!(sessions);
        summary["runs"] = json!(runs);
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("json values serialize"));
    Ok(())
}
