use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hazardline_core::digest::json_digest;
use hazardline_core::ensemble::{
    enumerate_factorial, expectation, sample_lhs, Distribution, EnsembleDesign, ForecastMember, ScenarioId,
    UncertaintySpace,
};
use hazardline_core::fusion::{CitizenReport, IgnitionBelief, ReportStatus};
use hazardline_core::hazard::{
    simulate_final, ActionKind, ControlAction, FireState, ForcingSeries, ParameterVector, SpreadRuleVariant,
};
use hazardline_core::polfc::{
    pareto_filter, select, CandidateSource, CandidateTemplates, ControlStrategy, ModelSetup, PlanEntry, PlanProvenance,
    PlanResult, PlanningConfig, PlanningSession, ReplanTrigger, SelectionPolicy, StrategyId,
};
use hazardline_core::raster::{Cell, GridGeometry};
use hazardline_core::sched::ComputeBudget;
use hazardline_core::{CostVector, CriteriaRegistry};

fn random_result(rng: &mut ChaCha8Rng, n: usize, k: usize, scenarios: usize, grid: bool) -> (PlanResult, EnsembleDesign) {
    let space = UncertaintySpace {
        variants: vec![SpreadRuleVariant::StochasticMoore],
        members: vec![ForecastMember { id: "m".into(), prior: 1.0 }],
        parameters: BTreeMap::from([("p0".to_string(), Distribution::Uniform { lo: 0.1, hi: 0.9 })]),
    };
    let design = sample_lhs(&space, scenarios, rng.random()).unwrap();
    let mut entries = BTreeMap::new();
    for i in 0..n {
        let per_scenario: BTreeMap<ScenarioId, CostVector> = design
            .scenarios
            .iter()
            .map(|s| {
                let v = (0..k).map(|_| if grid { rng.random_range(0..4) as f64 } else { rng.random_range(0.0..100.0) });
                (s.id, CostVector::new(v.collect()))
            })
            .collect();
        let e = expectation(&per_scenario, &design).unwrap();
        entries.insert(
            StrategyId(i as u32),
            PlanEntry { expected: e.mean, per_scenario, covered_fraction: 1.0, low_confidence: false },
        );
    }
    let criteria = (0..k).map(|i| format!("c{i}")).collect();
    let provenance = PlanProvenance { design_id: design.design_id(), design_seed: design.seed, belief_generation: 0, t_now: 0 };
    (PlanResult { criteria, entries, provenance }, design)
}

fn brute_front(result: &PlanResult) -> Vec<StrategyId> {
    let all: Vec<_> = result.entries.iter().collect();
    all.iter()
        .filter(|(_, a)| {
            !all.iter().any(|(_, b)| {
                let (x, y) = (b.expected.values(), a.expected.values());
                x.iter().zip(y).all(|(p, q)| p <= q) && x.iter().zip(y).any(|(p, q)| p < q)
            })
        })
        .map(|(id, _)| **id)
        .collect()
}

#[test]
fn pareto_filter_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let n = rng.random_range(1..=64);
        let k = rng.random_range(1..=4);
        let (result, _) = random_result(&mut rng, n, k, 1, i % 2 == 0);
        let front = pareto_filter(&result).unwrap();
        assert_eq!(front.members, brute_front(&result), "instance {i}");
        let dominated: BTreeSet<_> = front.dominance.iter().map(|(_, b)| *b).collect();
        assert!(front.members.iter().all(|m| !dominated.contains(m)));
    }
}

#[test]
fn weighted_sum_selection_is_the_global_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..50 {
        let n = rng.random_range(1..=32);
        let s = rng.random_range(1..=8);
        let (result, _) = random_result(&mut rng, n, 3, s, false);
        let weights: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
        let front = pareto_filter(&result).unwrap();
        let chosen = select(&front, &result, &SelectionPolicy::WeightedSum { weights: weights.clone() }).unwrap();
        let oracle = result
            .entries
            .iter()
            .map(|(id, e)| (*id, e.expected.values().iter().zip(&weights).map(|(c, w)| c * w).sum::<f64>()))
            .fold(None::<(StrategyId, f64)>, |best, (id, v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((id, v)),
            })
            .unwrap()
            .0;
        assert_eq!(chosen, oracle, "fixture {i}");
    }
}

proptest! {
    #[test]
    fn front_is_never_empty_and_dominance_is_irreflexive(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (result, _) = random_result(&mut rng, n, 2, 2, true);
        let front = pareto_filter(&result).unwrap();
        prop_assert!(!front.members.is_empty());
        prop_assert!(front.dominance.iter().all(|(a, b)| a != b));
    }
}

/// Fire line near the west edge of a 9 × 18 grid under an easterly push.
fn spread_model(forcing_u: f64) -> (ModelSetup, FireState) {
    let g = GridGeometry::new(9, 18, 100.0).unwrap();
    let base = ParameterVector::uniform_fuel(g, 0.45, 1.0, 2).unwrap();
    let mut fire = FireState::from_fuel(&base.fuel);
    fire.ignite(&[Cell::new(3, 4), Cell::new(4, 4), Cell::new(5, 4)], 2).unwrap();
    let model = ModelSetup {
        base,
        forcing: BTreeMap::from([("m".to_string(), ForcingSeries::uniform(forcing_u, 0.0, 12))]),
        asset_mask: None,
        criteria: CriteriaRegistry::standard(),
        t_end: 12,
    };
    (model, fire)
}

fn single_design(seed: u64) -> EnsembleDesign {
    let space = UncertaintySpace {
        variants: vec![SpreadRuleVariant::StochasticMoore],
        members: vec![ForecastMember { id: "m".into(), prior: 1.0 }],
        parameters: BTreeMap::new(),
    };
    enumerate_factorial(&space, 1, seed, 16).unwrap()
}

fn config(budget_eur: f64, candidates: CandidateSource) -> PlanningConfig {
    PlanningConfig {
        t_begin: 0,
        budget_eur,
        candidates,
        compute: ComputeBudget::new(Duration::from_secs(600), 4),
        min_coverage: 0.0,
        selection: Some(SelectionPolicy::WeightedSum { weights: vec![1.0, 0.0, 0.02] }),
    }
}

fn scalar(e: &PlanEntry) -> f64 {
    e.expected.weighted_sum(&[1.0, 0.0, 0.02])
}

#[test]
fn larger_budgets_never_select_worse_plans() {
    let (model, fire) = spread_model(4.0);
    let belief = IgnitionBelief::from_state(&fire).unwrap();
    let mut previous: Option<(BTreeSet<StrategyId>, f64)> = None;
    for budget in [0.0, 4.0, 8.0, 12.0, 30.0, 1e4] {
        let cfg = config(budget, CandidateSource::Templates(CandidateTemplates::default()));
        let mut session = PlanningSession::new(cfg, model.clone(), single_design(3), fire.clone(), belief.clone()).unwrap();
        let plan = session.replan(ReplanTrigger::Timer, &[], &[], 0.0, None).unwrap();
        let ids: BTreeSet<StrategyId> = plan.result.entries.keys().copied().collect();
        assert!(ids.contains(&StrategyId::NULL), "null strategy missing at budget {budget}");
        if budget == 0.0 {
            assert_eq!(ids.len(), 1);
        }
        let value = scalar(&plan.result.entries[&plan.selected.unwrap()]);
        if let Some((prev_ids, prev_value)) = &previous {
            assert!(prev_ids.is_subset(&ids));
            assert!(value <= *prev_value, "budget {budget}: {value} > {prev_value}");
        }
        previous = Some((ids, value));
    }
}

fn line(col: usize, start_step: u32) -> ControlAction {
    ControlAction {
        kind: ActionKind::Firebreak { cells: (0..9).map(|r| Cell::new(r, col)).collect() },
        start_step,
        resource_cost: 9.0,
    }
}

fn menu() -> Vec<ControlStrategy> {
    let mut out = Vec::new();
    let mut id = 1;
    for col in [7, 9, 12] {
        for start in [0, 2, 4] {
            out.push(ControlStrategy::new(StrategyId(id), format!("line {col}@{start}"), vec![line(col, start)]));
            id += 1;
        }
    }
    // Closed under truncation: each early line also exists on its own, so a
    // later cycle offers no continuation that was unavailable before.
    for col in [6, 8] {
        out.push(ControlStrategy::new(StrategyId(id), format!("line {col}@1"), vec![line(col, 1)]));
        id += 1;
    }
    for (a, b) in [(6, 13), (8, 14)] {
        out.push(ControlStrategy::new(StrategyId(id), format!("lines {a}+{b}"), vec![line(a, 1), line(b, 5)]));
        id += 1;
    }
    out
}

#[test]
fn replan_without_news_keeps_the_committed_tail() {
    for seed in [1u64, 2, 3, 4] {
        let (model, fire) = spread_model(3.0);
        let design = single_design(seed);
        let belief = IgnitionBelief::from_state(&fire).unwrap();
        let cfg = config(100.0, CandidateSource::Menu { strategies: menu() });
        let mut session = PlanningSession::new(cfg, model.clone(), design.clone(), fire.clone(), belief).unwrap();
        let first = session.replan(ReplanTrigger::Timer, &[], &[], 0.0, None).unwrap().selected.unwrap();
        let committed = session.commit(first).unwrap().clone();

        let t1 = 3;
        let truth = &design.scenarios[0];
        let params = model.scenario_params(truth).unwrap();
        let observed =
            simulate_final(&fire, &model.forcing["m"], &params, truth.variant, t1, &committed.past(t1), truth.seed)
                .unwrap()
                .state;
        session.advance(observed).unwrap();
        let plan = session.replan(ReplanTrigger::Timer, &[], &[], 0.0, None).unwrap();
        let again = plan.selected_strategy().unwrap();
        assert_eq!(json_digest(&again.tail(t1)), json_digest(&committed.tail(t1)), "seed {seed}: {first} then {}", again.id);
    }
}

#[test]
fn new_evidence_moves_the_selected_firebreak() {
    let g = GridGeometry::new(9, 30, 100.0).unwrap();
    let base = ParameterVector::uniform_fuel(g, 0.5, 1.0, 2).unwrap();
    let empty = FireState::from_fuel(&base.fuel);
    let model = ModelSetup {
        base,
        forcing: BTreeMap::from([("m".to_string(), ForcingSeries::uniform(6.0, 0.0, 10))]),
        asset_mask: None,
        criteria: CriteriaRegistry::standard(),
        t_end: 10,
    };
    let report = |id: &str, col: usize, confidence: f64| {
        let (x, y) = g.center(Cell::new(4, col));
        CitizenReport {
            id: id.into(),
            t: 0.0,
            x,
            y,
            sigma_m: 60.0,
            phenomenon: "smoke".into(),
            confidence,
            status: ReportStatus::Accepted,
            reviewer: None,
        }
    };
    let templates = CandidateTemplates { suppression_top_k: 0, ..CandidateTemplates::default() };
    let cfg = config(1e4, CandidateSource::Templates(templates));
    let prior = IgnitionBelief::uniform(g, vec![true; g.len()]).unwrap();
    let mut session = PlanningSession::new(cfg, model, single_design(5), empty, prior).unwrap();

    let before = session.replan(ReplanTrigger::NewEvidence, &[report("west", 4, 0.95)], &[], 0.0, None).unwrap();
    let before = before.selected_strategy().unwrap().clone();
    let mode_before = session.belief().mode();
    let after = session.replan(ReplanTrigger::NewEvidence, &[report("east", 22, 0.99)], &[], 0.0, None).unwrap();
    let after = after.selected_strategy().unwrap().clone();
    assert!(session.belief().mode().col > mode_before.col + 10);
    assert!(!before.is_null() && !after.is_null());
    assert_ne!(before.actions, after.actions, "{} / {}", before.label, after.label);
}
