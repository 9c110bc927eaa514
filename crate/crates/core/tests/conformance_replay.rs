mod common;

use common::{build, random_events};
use pmchat_core::conformance::{check_conformance, ViolationKind};
use pmchat_core::discovery::{discover_model, ProcessModel, Thresholds};
use pmchat_core::log::{fixture_l1, fixture_l1_events, Event};
use pmchat_core::Timestamp;
use proptest::prelude::*;

fn full_dfg() -> Thresholds {
    Thresholds::new(0.0, 1).unwrap()
}

/// A two-event case whose only edge the model does not allow, or an
/// undeclared activity when every pair is allowed.
fn offending_case(model: &ProcessModel) -> Vec<Event> {
    let t = Timestamp::from_millis(common::BASE_MILLIS);
    let pair = model
        .activities
        .iter()
        .flat_map(|a| model.activities.iter().map(move |b| (a, b)))
        .find(|(a, b)| !model.allows_edge(a, b));
    let (a, b) = match pair {
        Some((a, b)) => (a.clone(), b.clone()),
        None => ("A".to_string(), "Z-unknown".to_string()),
    };
    vec![Event::new("injected", a, t), Event::new("injected", b, t.add_minutes(1))]
}

#[test]
fn l1_replays_cleanly_against_its_own_model() {
    let log = fixture_l1();
    let model = discover_model(&log, full_dfg()).model;
    let report = check_conformance(&model, &log);
    assert_eq!(report.log_fitness, 1.0);
    assert!(report.violations.is_empty());
}

// Model from L1 with thresholds (0, 1): edges A>B, B>B, B>C, A>C, start {A},
// end {C}. Moves per case are events + 1 (one per event entry plus the end).
//   c1 A,B,C   4 moves, 0 violations
//   c2 A,B,B,C 5 moves, 0 violations
//   c3 A,C     3 moves, 0 violations
//   c4 A,C,B   4 moves: C>B not allowed, B not an allowed end -> 2 violations
// Pooled fitness = (4 + 5 + 3 + 2) / (4 + 5 + 3 + 4) = 14/16.
#[test]
fn hand_replay_of_out_of_order_case() {
    let model = discover_model(&fixture_l1(), full_dfg()).model;
    let t = Timestamp::from_millis(common::BASE_MILLIS);
    let mut events = fixture_l1_events();
    for (i, a) in ["A", "C", "B"].into_iter().enumerate() {
        events.push(Event::new("c4", a, t.add_minutes(i as i64)).with_resource("r1"));
    }
    let report = check_conformance(&model, &build(events));
    assert_eq!((report.allowed_moves, report.total_moves), (14, 16));
    assert!((report.log_fitness - 14.0 / 16.0).abs() < 1e-12);
    assert_eq!(report.per_case_fitness["c4"], 0.5);
    let kinds: Vec<ViolationKind> = report.violations.iter().map(|v| v.kind).collect();
    assert_eq!(kinds, vec![ViolationKind::DisallowedEdge, ViolationKind::BadEnd]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn self_conformance_is_perfect_and_injection_lowers_it(seed in any::<u64>()) {
        let events = random_events(seed);
        let log = build(events.clone());
        let model = discover_model(&log, full_dfg()).model;
        let own = check_conformance(&model, &log);
        prop_assert_eq!(own.log_fitness, 1.0);

        let mut injected = events;
        injected.extend(offending_case(&model));
        let after = check_conformance(&model, &build(injected));
        prop_assert!(after.log_fitness < own.log_fitness);
        prop_assert!(after.per_case_fitness["injected"] < 1.0);
    }
}
