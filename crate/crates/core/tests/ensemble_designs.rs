use std::collections::BTreeMap;

use proptest::prelude::*;

use hazardline_core::ensemble::{
    enumerate_factorial, expectation, sample_lhs, sample_monte_carlo, Distribution, EnsembleError, ForecastMember,
    UncertaintySpace,
};
use hazardline_core::hazard::SpreadRuleVariant;
use hazardline_core::CostVector;

fn space(n_members: usize, n_params: usize) -> UncertaintySpace {
    let mut parameters = BTreeMap::new();
    for i in 0..n_params {
        parameters.insert(format!("p{i}"), Distribution::Uniform { lo: i as f64, hi: i as f64 + 1.0 });
    }
    parameters.insert("fixed".into(), Distribution::Fixed { value: 0.5 });
    UncertaintySpace {
        variants: vec![SpreadRuleVariant::StochasticMoore, SpreadRuleVariant::VonNeumannStochastic],
        members: (0..n_members).map(|i| ForecastMember { id: format!("m{i}"), prior: 1.0 + i as f64 }).collect(),
        parameters,
    }
}

#[test]
fn lhs_fills_every_stratum_once() {
    let sp = space(3, 4);
    for n in [1usize, 4, 16, 64] {
        let d = sample_lhs(&sp, n, 42).unwrap();
        assert_eq!(d.len(), n);
        for i in 0..4 {
            let name = format!("p{i}");
            let mut hits = vec![0; n];
            for s in &d.scenarios {
                let u = s.parameters[&name] - i as f64;
                hits[((u * n as f64).floor() as usize).min(n - 1)] += 1;
            }
            assert!(hits.iter().all(|h| *h == 1), "n={n} {name}: {hits:?}");
        }
        assert!(d.scenarios.iter().all(|s| s.parameters["fixed"] == 0.5));
    }
}

#[test]
fn factorial_size_is_the_closed_form_product() {
    for (members, params, levels) in [(1, 0, 3), (2, 1, 3), (3, 2, 2), (1, 3, 4)] {
        let sp = space(members, params);
        let d = enumerate_factorial(&sp, levels, 0, 4096).unwrap();
        assert_eq!(d.len(), 2 * members * levels.pow(params as u32));
        assert!((d.total_weight() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn oversized_factorial_is_refused_with_its_size() {
    let err = enumerate_factorial(&space(2, 6), 10, 0, 4096).unwrap_err();
    match err {
        EnsembleError::DesignTooLarge { size, cap, .. } => {
            assert_eq!(size, 2 * 2 * 1_000_000);
            assert_eq!(cap, 4096);
        }
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #[test]
    fn sampled_designs_are_normalized_and_seeded(n in 1usize..80, seed in any::<u64>(), mc in any::<bool>()) {
        let sp = space(2, 2);
        let sample = |s| if mc { sample_monte_carlo(&sp, n, s) } else { sample_lhs(&sp, n, s) };
        let d = sample(seed).unwrap();
        prop_assert_eq!(d.len(), n);
        prop_assert!((d.total_weight() - 1.0).abs() < 1e-9);
        prop_assert_eq!(&d, &sample(seed).unwrap());
        for s in &d.scenarios {
            prop_assert!((0.0..1.0).contains(&s.parameters["p0"]));
            prop_assert!((1.0..2.0).contains(&s.parameters["p1"]));
        }
    }

    /// Expectation over a covered subset equals the explicit renormalized mean.
    #[test]
    fn partial_expectation_renormalizes(mask in prop::collection::vec(any::<bool>(), 12), seed in any::<u64>()) {
        let d = sample_lhs(&space(2, 1), 12, seed).unwrap();
        let values: BTreeMap<_, _> = d
            .scenarios
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(s, _)| (s.id, CostVector::new(vec![s.parameters["p0"], 1.0])))
            .collect();
        let out = expectation(&values, &d);
        if values.is_empty() {
            prop_assert!(out.is_err());
            return Ok(());
        }
        let out = out.unwrap();
        let w: f64 = d.scenarios.iter().filter(|s| values.contains_key(&s.id)).map(|s| s.weight).sum();
        let m: f64 = d.scenarios.iter().filter(|s| values.contains_key(&s.id)).map(|s| s.weight * s.parameters["p0"]).sum::<f64>() / w;
        prop_assert!((out.mean.values()[0] - m).abs() < 1e-12);
        prop_assert!((out.mean.values()[1] - 1.0).abs() < 1e-12);
        prop_assert!((out.covered_fraction - w / d.total_weight()).abs() < 1e-12);
    }
}
