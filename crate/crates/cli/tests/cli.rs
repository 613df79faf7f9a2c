use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use serde_json::Value;

use hazardline_core::config::RunConfig;
use hazardline_server::events::EventLog;
use hazardline_server::{Event, ServerState};

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn demo() -> PathBuf {
    repo().join("fixtures/demo/run.json")
}

fn hl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hazardline")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_matches_golden_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let run = hl(&["simulate", "--config", s(&demo()), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", text(&run));
    let manifest = read_json(&out.join("manifest.json"));
    let digests: Vec<&str> = manifest["steps"].as_array().unwrap().iter().map(|s| s["state_digest"].as_str().unwrap()).collect();
    let golden = read_json(&repo().join("fixtures/demo/golden/simulate-e0.json"));
    let expected: Vec<&str> = golden["state_digests"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(digests, expected);
    assert_eq!(manifest["provenance"]["seed"], 20261017);

    // Burned cells never decrease, and the series covers every step.
    let csv = std::fs::read_to_string(out.join("burned_area.csv")).unwrap();
    let burned: Vec<u64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(burned.len(), 17);
    assert!(burned.windows(2).all(|w| w[0] <= w[1]));

    let again = tmp.path().join("sim2");
    assert_eq!(code(&hl(&["simulate", "--config", s(&demo()), "--out", s(&again)])), 0);
    assert_eq!(tree(&out), tree(&again));
}

#[test]
fn horizon_zero_writes_one_state() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h0");
    let run = hl(&["simulate", "--config", s(&demo()), "--horizon", "0", "--scenario", "3", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", text(&run));
    let states: Vec<_> = tree(&out).into_iter().filter(|(n, _)| n.ends_with(".asc")).collect();
    assert_eq!(states.len(), 1);
    assert_eq!(states[0].0, "state_t0000.asc");
    assert_eq!(code(&hl(&["simulate", "--config", s(&demo()), "--horizon", "17", "--out", s(&out)])), 1);
    assert_eq!(code(&hl(&["simulate", "--config", s(&demo()), "--scenario", "99", "--out", s(&out)])), 1);
}

#[test]
fn broken_inputs_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let run = hl(&["simulate", "--config", s(&demo()), "--set", "fuel=missing.asc", "--out", s(&out)]);
    assert_eq!(code(&run), 2);
    assert!(text(&run).contains("missing.asc"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
    assert_eq!(code(&hl(&["plan", "--config", "/nonexistent/run.json"])), 2);
    assert_eq!(code(&hl(&["plan", "--config", s(&demo()), "--set", "nodot"])), 2);
}

#[test]
fn ensemble_agrees_with_single_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let ens = tmp.path().join("ens");
    let run = hl(&["ensemble", "--config", s(&demo()), "--out", s(&ens)]);
    assert_eq!(code(&run), 0, "{}", text(&run));
    let doc = read_json(&ens.join("ensemble.json"));
    let rows = doc["scenarios"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    let weighted: f64 =
        rows.iter().map(|r| r["scenario"]["weight"].as_f64().unwrap() * r["affected_cells"].as_f64().unwrap()).sum();
    assert!((weighted - doc["expected_affected_cells"].as_f64().unwrap()).abs() < 1e-9);

    // The last state of scenario 2 is the one `simulate` ends with.
    let sim = tmp.path().join("sim");
    assert_eq!(code(&hl(&["simulate", "--config", s(&demo()), "--scenario", "2", "--out", s(&sim)])), 0);
    let manifest = read_json(&sim.join("manifest.json"));
    let last = manifest["steps"].as_array().unwrap().last().unwrap()["state_digest"].clone();
    assert_eq!(rows[2]["final_digest"], last);

    let grid = std::fs::read_to_string(ens.join("burn_probability.asc")).unwrap();
    let values: Vec<f64> = grid.lines().skip(6).flat_map(|l| l.split_whitespace().map(|v| v.parse::<f64>().unwrap())).collect();
    assert_eq!(values.len(), 1600);
    assert!(values.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
    // Both ignition cells burn in every scenario.
    assert!((values[20 * 40 + 10] - 1.0).abs() < 1e-12);
}

fn scalar_argmin(plan: &Value) -> u64 {
    let entries = plan["entries"].as_array().unwrap();
    let best = entries.iter().map(|e| e["scalarized"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    let winners: Vec<u64> =
        entries.iter().filter(|e| e["scalarized"].as_f64().unwrap() == best).map(|e| e["strategy_id"].as_u64().unwrap()).collect();
    assert_eq!(winners.len(), 1, "scalarized tie");
    winners[0]
}

#[test]
fn plan_selects_the_confining_ring() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("plan");
    let run = hl(&["plan", "--config", s(&demo()), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", text(&run));
    let plan = read_json(&out.join("plan.json"));
    assert_eq!(plan["status"], "COMPLETED");
    assert_eq!(plan["selected_label"], "ring +3");
    // Exhaustive oracle: recompute every weighted sum from the expected costs.
    let weights: Vec<f64> = plan["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).collect();
    for e in plan["entries"].as_array().unwrap() {
        let v: f64 = e["expected"].as_array().unwrap().iter().zip(&weights).map(|(c, w)| c.as_f64().unwrap() * w).sum();
        assert!((v - e["scalarized"].as_f64().unwrap()).abs() < 1e-9);
    }
    assert_eq!(plan["selected"].as_u64().unwrap(), scalar_argmin(&plan));
    assert!(plan["front"].as_array().unwrap().contains(&plan["selected"]));

    let again = tmp.path().join("plan2");
    assert_eq!(code(&hl(&["plan", "--config", s(&demo()), "--set", "workers=1", "--out", s(&again)])), 0);
    let a = read_json(&out.join("plan.json"));
    let b = read_json(&again.join("plan.json"));
    assert_eq!(a["plan_digest"], b["plan_digest"]);
    assert_eq!(a["entries"], b["entries"]);
}

#[test]
fn single_candidate_is_selected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("plan");
    let run = hl(&[
        "plan",
        "--config",
        s(&demo()),
        "--set",
        "candidates.firebreak_offsets=[]",
        "--set",
        "candidates.suppression_top_k=0",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", text(&run));
    let plan = read_json(&out.join("plan.json"));
    let labels: Vec<&str> = plan["entries"].as_array().unwrap().iter().map(|e| e["label"].as_str().unwrap()).collect();
    assert_eq!(labels, vec!["null", "ring +3"]);
    assert_eq!(plan["selected_label"], "ring +3");
}

#[test]
fn one_millisecond_deadline_gives_a_partial_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("plan");
    let run = hl(&["plan", "--config", s(&demo()), "--set", "deadline_ms=1", "--set", "design.n=32", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", text(&run));
    let plan = read_json(&out.join("plan.json"));
    assert_eq!(plan["status"], "DEADLINE_PARTIAL");
    assert!(plan["coverage"]["completed"].as_u64().unwrap() < plan["coverage"]["total"].as_u64().unwrap());
    assert!(plan["selected"].is_u64());
}

#[test]
fn validate_reports_pipeline_defects() {
    let dir = repo().join("fixtures/pipelines");
    for entry in std::fs::read_dir(dir.join("clean")).unwrap() {
        let path = entry.unwrap().path();
        let out = hl(&["validate", "--config", s(&path)]);
        assert_eq!(code(&out), 0, "{}: {}", path.display(), text(&out));
    }
    for entry in std::fs::read_dir(dir.join("defect")).unwrap() {
        let path = entry.unwrap().path();
        assert_eq!(code(&hl(&["validate", "--config", s(&path)])), 1, "{}", path.display());
    }
    let units = text(&hl(&["validate", "--config", s(&dir.join("defect/01_wind_units.json"))]));
    assert!(units.contains("real m/s") && units.contains("real m\n"), "{units}");
    let cycle = text(&hl(&["validate", "--config", s(&dir.join("defect/09_three_cycle.json"))]));
    assert!(cycle.contains("cycle detected: b -> c -> a"), "{cycle}");
}

#[test]
fn validate_checks_run_configs() {
    assert_eq!(code(&hl(&["validate", "--config", s(&demo())])), 0);
    let bad = hl(&["validate", "--config", s(&demo()), "--set", "weights=[1,-2,0]"]);
    assert_eq!(code(&bad), 1, "{}", text(&bad));
    assert_eq!(code(&hl(&["validate", "--config", s(&demo()), "--set", "asset_mask=gone.asc"])), 2);
    assert_eq!(code(&hl(&["validate", "--config", "/nonexistent.json"])), 2);
}

fn write_log(path: &Path) {
    let (mut log, _) = EventLog::open(path).unwrap();
    log.append(Event::SessionCreated { session_id: "s1".into() }).unwrap();
    log.append(Event::SessionCreated { session_id: "s2".into() }).unwrap();
    log.append_raw(
        "REPORT_INGESTED",
        serde_json::json!({"report": {"id": "a", "t": 0.0, "x": 500525.0, "y": 4200975.0, "sigma_m": 100.0,
            "phenomenon": "flames", "confidence": 0.9, "status": "PENDING"}}),
    )
    .unwrap();
}

#[test]
fn replay_prints_the_state_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("events.ndjson");
    write_log(&log);
    let out = hl(&["replay", "--log", s(&log), "--config", s(&demo())]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    let records = hazardline_server::events::read_log(&log).unwrap();
    let domain = RunConfig::load(&demo(), &[]).unwrap().config.build().unwrap();
    let state = ServerState::replay(Arc::new(domain), &records).unwrap();
    assert_eq!(summary["state_digest"], state.digest());
    assert_eq!(summary["last_seq"], 3);
    assert_eq!(summary["sessions"].as_array().unwrap().len(), 2);
    assert_eq!(summary["reports"]["PENDING"], 1);

    let bare: Value = serde_json::from_slice(&hl(&["replay", "--log", s(&log)]).stdout).unwrap();
    assert_eq!(bare["events"]["SESSION_CREATED"], 2);
}

#[test]
fn replay_refuses_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("events.ndjson");
    write_log(&log);
    let text_log = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text_log.lines().collect();
    std::fs::write(&log, format!("{}\n{}\n", lines[0], lines[2])).unwrap();
    let out = hl(&["replay", "--log", s(&log)]);
    assert_eq!(code(&out), 1);
    assert!(text(&out).contains("expected seq 2, found 3"));
    assert_eq!(code(&hl(&["replay", "--log", s(&tmp.path().join("absent.ndjson"))])), 2);
}

/// Kills the server child even when an assertion fails.
struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[tokio::test]
async fn serve_answers_over_http() {
    use std::io::{BufRead, BufReader};
    let tmp = tempfile::tempdir().unwrap();
    let mut child = Child(
        Command::new(env!("CARGO_BIN_EXE_hazardline"))
            .args(["serve", "--config", s(&demo()), "--port", "0", "--data-dir", s(tmp.path())])
            .stderr(std::process::Stdio::piped())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").expect("listen line").to_string();
    let http = reqwest::Client::new();
    let created = http.post(format!("{base}/api/sessions")).send().await.unwrap();
    assert_eq!(created.status(), 201);
    let digest: Value = http.get(format!("{base}/api/digest")).send().await.unwrap().json().await.unwrap();
    assert_eq!(digest["last_seq"], 1);
    drop(child);

    let out = hl(&["replay", "--log", s(&tmp.path().join("events.ndjson")), "--config", s(&demo())]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["state_digest"], digest["digest"]);
}
