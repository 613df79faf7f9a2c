use proptest::prelude::*;

use hazardline_core::fusion::{update_belief, CitizenReport, IgnitionBelief, RemoteSensingObservation, ReportStatus};
use hazardline_core::raster::{Cell, GridGeometry, RasterGrid};
use hazardline_core::Unit;

const N: usize = 12;

fn geometry() -> GridGeometry {
    GridGeometry::new(N, N, 100.0).unwrap()
}

fn belief(mask: &[bool]) -> IgnitionBelief {
    let mut burnable: Vec<bool> = (0..N * N).map(|i| mask[i % mask.len()]).collect();
    burnable[0] = true;
    IgnitionBelief::uniform(geometry(), burnable).unwrap()
}

fn report_strategy(status: ReportStatus) -> impl Strategy<Value = CitizenReport> {
    (0.0..1200.0f64, 0.0..1200.0f64, 30.0..500.0f64, 0.0..=1.0f64).prop_map(move |(x, y, sigma_m, confidence)| {
        CitizenReport {
            id: String::new(),
            t: 0.0,
            x,
            y,
            sigma_m,
            phenomenon: "smoke".into(),
            confidence,
            status,
            reviewer: None,
        }
    })
}

fn reports(status: ReportStatus, prefix: &'static str) -> impl Strategy<Value = Vec<CitizenReport>> {
    prop::collection::vec(report_strategy(status), 1..6).prop_map(move |mut v| {
        for (i, r) in v.iter_mut().enumerate() {
            r.id = format!("{prefix}{i}");
        }
        v
    })
}

fn observation_strategy() -> impl Strategy<Value = RemoteSensingObservation> {
    prop::collection::vec(prop_oneof![3 => 0.0..=1.0f64, 1 => Just(-9999.0)], N * N).prop_map(|values| {
        RemoteSensingObservation {
            id: "scan".into(),
            acquired: 0.0,
            available: 1.0,
            detection: RasterGrid::new(geometry(), Unit::Dimensionless, values).unwrap().with_nodata(-9999.0).unwrap(),
        }
    })
}

fn max_diff(a: &IgnitionBelief, b: &IgnitionBelief) -> f64 {
    a.posterior().iter().zip(b.posterior()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_stays_normalized(
        mask in prop::collection::vec(prop::bool::weighted(0.8), 1..30),
        a in reports(ReportStatus::Accepted, "a"),
        b in reports(ReportStatus::Accepted, "b"),
        obs in observation_strategy(),
    ) {
        let b0 = belief(&mask);
        let b1 = update_belief(&b0, &a, &[], 0.0).unwrap();
        let b2 = update_belief(&b1, &b, &[obs], 2.0).unwrap();
        for bel in [&b0, &b1, &b2] {
            prop_assert!((bel.total() - 1.0).abs() <= 1e-9);
            bel.check_invariants().unwrap();
            for (p, burnable) in bel.posterior().iter().zip(bel.burnable()) {
                prop_assert!(*burnable || *p == 0.0);
            }
        }
        prop_assert_eq!(b2.generation(), 2);
    }

    #[test]
    fn evidence_order_does_not_matter(
        a in reports(ReportStatus::Accepted, "a"),
        b in reports(ReportStatus::Accepted, "b"),
        obs in observation_strategy(),
        shift in 0usize..6,
    ) {
        let b0 = belief(&[true]);
        let mut all: Vec<CitizenReport> = a.iter().chain(&b).cloned().collect();
        let forward = update_belief(&b0, &all, std::slice::from_ref(&obs), 1.0).unwrap();
        all.reverse();
        let len = all.len();
        all.rotate_left(shift % len);
        let permuted = update_belief(&b0, &all, std::slice::from_ref(&obs), 1.0).unwrap();
        prop_assert_eq!(forward.digest(), permuted.digest());

        let ab = update_belief(&update_belief(&b0, &a, &[], 1.0).unwrap(), &b, std::slice::from_ref(&obs), 1.0).unwrap();
        let ba = update_belief(&update_belief(&b0, &b, std::slice::from_ref(&obs), 1.0).unwrap(), &a, &[], 1.0).unwrap();
        prop_assert!(max_diff(&ab, &ba) <= 1e-12);
        prop_assert!(max_diff(&ab, &forward) <= 1e-12);
    }

    #[test]
    fn unreviewed_reports_are_inert(
        pending in reports(ReportStatus::Pending, "p"),
        rejected in reports(ReportStatus::Rejected, "r"),
        accepted in reports(ReportStatus::Accepted, "a"),
    ) {
        let b0 = update_belief(&belief(&[true, true, false]), &accepted, &[], 0.0).unwrap();
        let mixed: Vec<_> = pending.into_iter().chain(rejected).collect();
        let b1 = update_belief(&b0, &mixed, &[], 0.0).unwrap();
        prop_assert_eq!(b0.digest(), b1.digest());
        prop_assert_eq!(b0.generation(), b1.generation());
    }

    /// A confident report at a cell centre makes that cell the mode of a
    /// uniform prior.
    #[test]
    fn confident_report_sharpens_towards_its_cell(row in 0usize..N, col in 0usize..N, sigma_m in 30.0..300.0f64) {
        let b0 = belief(&[true]);
        let cell = Cell::new(row, col);
        let (x, y) = geometry().center(cell);
        let r = CitizenReport {
            id: "c".into(), t: 0.0, x, y, sigma_m, phenomenon: "flame".into(),
            confidence: 0.9, status: ReportStatus::Accepted, reviewer: None,
        };
        let b1 = update_belief(&b0, &[r], &[], 0.0).unwrap();
        prop_assert_eq!(b1.mode(), cell);
        prop_assert!(b1.probability(cell) > b0.probability(cell));
    }
}

#[test]
fn late_observation_is_ignored_until_available() {
    let b0 = belief(&[true]);
    let obs = RemoteSensingObservation {
        id: "late".into(),
        acquired: 0.0,
        available: 5.0,
        detection: RasterGrid::filled(geometry(), Unit::Dimensionless, 0.5).unwrap(),
    };
    let obs = std::slice::from_ref(&obs);
    assert_eq!(update_belief(&b0, &[], obs, 4.0).unwrap().digest(), b0.digest());
    let b1 = update_belief(&b0, &[], obs, 5.0).unwrap();
    assert_eq!(b1.generation(), 1);
    assert!(b1.has_incorporated("obs:late"));
}
