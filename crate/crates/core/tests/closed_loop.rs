use std::f64::consts::FRAC_PI_2;

use pivotrack::certify::certify;
use pivotrack::config::{parse_manifest, to_manifest, PAPER_SQUARE};
use pivotrack::outer::{TrajectoryKind, VehicleModel};
use pivotrack::sim::{run, Mode, Outcome, SimConfig, CSV_VERSION};
use proptest::prelude::*;

fn square(duration: f64) -> SimConfig {
    SimConfig {
        duration,
        ..parse_manifest(PAPER_SQUARE).unwrap()
    }
}

#[test]
fn square_flips_through_free_fall() {
    let log = run(&square(4.0)).unwrap();
    assert!(log.outcome.is_completed());
    let upside_down: Vec<f64> = log.records.iter().filter(|r| r.lambda[1] < 0.0).map(|r| r.t).collect();
    assert!(!upside_down.is_empty());
    assert!(upside_down[0] > 2.0 && *upside_down.last().unwrap() < 3.0, "{upside_down:?}");
    // thrust is commanded through the flip, so u1 never goes negative
    assert!(log.records.iter().all(|r| r.u1 >= 0.0));
}

#[test]
fn naive_fails_where_put_completes() {
    let put = run(&square(4.0)).unwrap();
    let naive = run(&SimConfig {
        mode: Mode::Naive,
        ..square(4.0)
    })
    .unwrap();
    assert!(put.outcome.is_completed());
    let Outcome::Singularity { t, .. } = naive.outcome else {
        panic!("{:?}", naive.outcome)
    };
    // both runs agree until the singular instant
    let i = naive.records.len() - 2;
    assert!(naive.records[i].t < t);
    for k in 0..4 {
        assert!((naive.records[i].x[k] - put.records[i].x[k]).abs() < 1e-6);
    }
}

#[test]
fn covering_stays_consistent_outside_the_zone() {
    let log = run(&square(16.0)).unwrap();
    let worst = log
        .records
        .iter()
        .filter(|r| !r.in_zone)
        .filter_map(|r| r.covering_residual)
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn tracking_error_is_within_the_ultimate_bound() {
    let log = run(&square(30.0)).unwrap();
    let rep = certify(&log, &VehicleModel::multirotor()).unwrap();
    assert!(rep.ultimate_ok && rep.terminal_ok && rep.switching_ok, "{rep:#?}");
}

#[test]
fn manifest_round_trip_reproduces_the_log() {
    let c = square(1.0);
    let again = parse_manifest(&to_manifest(&c)).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    run(&c).unwrap().write_csv(&mut a).unwrap();
    run(&again).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with(CSV_VERSION));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // every initial attitude and rate recovers to the hover set
    #[test]
    fn hover_recovers_from_any_attitude(angle in -3.1f64..3.1, omega in -5.0f64..5.0) {
        let c = SimConfig {
            trajectory: TrajectoryKind::Hover { x: 0.0, y: 0.0 },
            duration: 8.0,
            initial: pivotrack::sim::InitialState {
                x: None,
                lambda_angle: Some(FRAC_PI_2 + angle),
                omega,
            },
            ..square(8.0)
        };
        let log = run(&c).unwrap();
        prop_assert!(log.outcome.is_completed());
        prop_assert_eq!(log.last().set_distance, 0.0);
        prop_assert!(log.last().v < 1e-6, "V = {}", log.last().v);
    }
}
