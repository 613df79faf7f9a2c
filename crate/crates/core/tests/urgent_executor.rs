use std::sync::Mutex;
use std::time::{Duration, Instant};

use hazardline_core::ensemble::ScenarioId;
use hazardline_core::polfc::StrategyId;
use hazardline_core::sched::{run_with_deadline, ComputeBudget, EvalTask, RunProgress, RunStatus, TaskId};

fn tasks(strategies: u32, scenarios: u32) -> Vec<EvalTask> {
    (0..strategies)
        .flat_map(|s| {
            (0..scenarios).map(move |e| EvalTask {
                id: TaskId { strategy: StrategyId(s), scenario: ScenarioId(e) },
                weight: 1.0 / scenarios as f64 + e as f64 * 1e-3,
                est_cost: 100,
            })
        })
        .collect()
}

fn stub(t: &EvalTask) -> Result<f64, String> {
    let mut x = (t.id.strategy.0 as f64 + 1.0) * 0.37 + t.id.scenario.0 as f64;
    for _ in 0..2000 {
        x = (x * 1.000_1).sin().abs() + 0.5;
    }
    Ok(x)
}

#[test]
fn worker_count_does_not_change_results() {
    let ts = tasks(9, 7);
    let one = run_with_deadline(&ts, &ComputeBudget::new(Duration::from_secs(60), 1), stub, None).unwrap();
    let eight = run_with_deadline(&ts, &ComputeBudget::new(Duration::from_secs(60), 8), stub, None).unwrap();
    assert_eq!(one.results, eight.results);
    assert_eq!(one.progress.status, RunStatus::Completed);
    assert_eq!(eight.progress.per_strategy, one.progress.per_strategy);
}

#[test]
fn coverage_stays_balanced_at_every_prefix() {
    let ts = tasks(6, 8);
    let seen: Mutex<Vec<RunProgress>> = Mutex::new(Vec::new());
    let observe = |p: &RunProgress| seen.lock().unwrap().push(p.clone());
    let slow = |t: &EvalTask| {
        std::thread::sleep(Duration::from_millis(1 + (t.id.scenario.0 as u64 * 7 + t.id.strategy.0 as u64) % 4));
        Ok(())
    };
    run_with_deadline(&ts, &ComputeBudget::new(Duration::from_secs(30), 5), slow, Some(&observe)).unwrap();
    let seen = seen.into_inner().unwrap();
    assert!(!seen.is_empty());
    let mut last = 0;
    for p in &seen {
        let counts: Vec<usize> = p.per_strategy.values().map(|c| c.completed).collect();
        let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
        assert!(spread <= 1, "spread {spread} at prefix {}", p.completed);
        assert!(p.completed > last);
        last = p.completed;
    }
    assert_eq!(last, 48);
}

#[test]
fn wall_time_respects_the_deadline_bound() {
    let ts = tasks(8, 16);
    let deadline = Duration::from_millis(300);
    let begin = Instant::now();
    let out = run_with_deadline(
        &ts,
        &ComputeBudget::new(deadline, 4),
        |_| {
            std::thread::sleep(Duration::from_millis(50));
            Ok(())
        },
        None,
    )
    .unwrap();
    let wall = begin.elapsed();
    assert_eq!(out.progress.status, RunStatus::DeadlinePartial);
    assert!(wall <= deadline + out.max_task_time + Duration::from_millis(100), "{wall:?}");
    assert!(out.progress.completed >= 4);
}

#[test]
fn deadline_shorter_than_one_task_still_yields_a_result() {
    let ts = tasks(3, 3);
    let out = run_with_deadline(
        &ts,
        &ComputeBudget::new(Duration::from_millis(1), 1),
        |_| {
            std::thread::sleep(Duration::from_millis(20));
            Ok(1u8)
        },
        None,
    )
    .unwrap();
    assert_eq!(out.progress.completed, 1);
    assert_eq!(out.dispatched, vec![TaskId { strategy: StrategyId(0), scenario: ScenarioId(2) }]);
    assert_eq!(out.progress.status, RunStatus::DeadlinePartial);
}
