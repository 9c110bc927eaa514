//! Random event logs and a brute-force oracle that recomputes KPIs from the
//! raw events without going through `EventLog`.
#![allow(dead_code)]

use pmchat_core::log::Event;
use pmchat_core::{EventLog, LogMetadata, Timestamp};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const BASE_MILLIS: i64 = 1_704_067_200_000;
pub const ACTIVITIES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];
pub const RESOURCES: [&str; 4] = ["alice", "bob", "carol", "dave"];

/// Up to 50 cases of up to 20 events. Timestamps are coarse so ties and
/// exact duplicates occur.
pub fn random_events(seed: u64) -> Vec<Event> {
    let mut rng = StdRng::seed_from_u64(seed);
    let cases = rng.random_range(1..=50);
    let mut events = Vec::new();
    for c in 0..cases {
        let case_id = format!("case-{c:03}");
        let n = rng.random_range(1..=20);
        for _ in 0..n {
            let activity = ACTIVITIES[rng.random_range(0..ACTIVITIES.len())];
            let minutes: i64 = rng.random_range(0..30);
            let mut e = Event::new(case_id.clone(), activity, Timestamp::from_millis(BASE_MILLIS + minutes * 60_000));
            if rng.random_bool(0.8) {
                e = e.with_resource(RESOURCES[rng.random_range(0..RESOURCES.len())]);
            }
            events.push(e);
        }
    }
    // interleave cases the way an export would
    for i in (1..events.len()).rev() {
        let j = rng.random_range(0..=i);
        events.swap(i, j);
    }
    events
}

pub fn build(events: Vec<Event>) -> EventLog {
    EventLog::from_events(events, LogMetadata::default()).unwrap().log
}

/// One case as the oracle sees it: id, activities, timestamps in millis.
#[derive(Clone, Debug)]
pub struct OracleCase {
    pub id: String,
    pub activities: Vec<String>,
    pub millis: Vec<i64>,
}

/// Groups by case with a linear scan, orders by (timestamp, input position)
/// with a selection sort, then removes repeats of (activity, time, resource).
pub fn oracle_cases(events: &[Event]) -> Vec<OracleCase> {
    let mut ids: Vec<String> = Vec::new();
    for e in events {
        if !ids.contains(&e.case_id) {
            ids.push(e.case_id.clone());
        }
    }
    ids.sort();
    let mut out = Vec::new();
    for id in ids {
        let mut rows: Vec<(i64, usize, &Event)> = events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.case_id == id)
            .map(|(i, e)| (e.timestamp.as_millis(), i, e))
            .collect();
        for i in 0..rows.len() {
            let mut min = i;
            for j in i + 1..rows.len() {
                if (rows[j].0, rows[j].1) < (rows[min].0, rows[min].1) {
                    min = j;
                }
            }
            rows.swap(i, min);
        }
        let mut kept: Vec<&Event> = Vec::new();
        for (_, _, e) in rows {
            let dup = kept.iter().any(|k| k.activity == e.activity && k.timestamp == e.timestamp && k.resource == e.resource);
            if !dup {
                kept.push(e);
            }
        }
        out.push(OracleCase {
            id,
            activities: kept.iter().map(|e| e.activity.clone()).collect(),
            millis: kept.iter().map(|e| e.timestamp.as_millis()).collect(),
        });
    }
    out
}

#[derive(Debug, PartialEq, Eq)]
pub struct OracleStats {
    pub cases: u64,
    pub activities: u64,
    pub variants: u64,
    pub rework: u64,
    pub first_millis: i64,
    pub last_millis: i64,
    pub span_secs: u64,
}

pub fn oracle_stats(cases: &[OracleCase]) -> OracleStats {
    let mut activities: Vec<&String> = Vec::new();
    let mut variants: Vec<&Vec<String>> = Vec::new();
    let mut rework = 0;
    let mut first = i64::MAX;
    let mut last = i64::MIN;
    for c in cases {
        for a in &c.activities {
            if !activities.contains(&a) {
                activities.push(a);
            }
        }
        if !variants.contains(&&c.activities) {
            variants.push(&c.activities);
        }
        let n = c.activities.len();
        if (0..n).any(|i| (i + 1..n).any(|j| c.activities[i] == c.activities[j])) {
            rework += 1;
        }
        for &m in &c.millis {
            first = first.min(m);
            last = last.max(m);
        }
    }
    OracleStats {
        cases: cases.len() as u64,
        activities: activities.len() as u64,
        variants: variants.len() as u64,
        rework,
        first_millis: first,
        last_millis: last,
        span_secs: ((last - first) / 1000) as u64,
    }
}

/// Directly-follows counts, as a list of ((from, to), count).
pub fn oracle_edges(cases: &[OracleCase]) -> Vec<((String, String), u64)> {
    let mut edges: Vec<((String, String), u64)> = Vec::new();
    for c in cases {
        for i in 1..c.activities.len() {
            let key = (c.activities[i - 1].clone(), c.activities[i].clone());
            match edges.iter_mut().find(|(k, _)| *k == key) {
                Some((_, n)) => *n += 1,
                None => edges.push((key, 1)),
            }
        }
    }
    edges.sort();
    edges
}

pub fn oracle_variants(cases: &[OracleCase]) -> Vec<(Vec<String>, u64)> {
    let mut out: Vec<(Vec<String>, u64)> = Vec::new();
    for c in cases {
        match out.iter_mut().find(|(s, _)| *s == c.activities) {
            Some((_, n)) => *n += 1,
            None => out.push((c.activities.clone(), 1)),
        }
    }
    out.sort();
    out
}

/// Compares the engine against the oracle; returns a description of the
/// first mismatch.
pub fn check_against_oracle(events: &[Event]) -> Result<(), String> {
    use pmchat_core::discovery::{build_dfg, extract_variants};
    use pmchat_core::kpi::{structural_stats, temporal_stats};

    let log = build(events.to_vec());
    let cases = oracle_cases(events);
    let want = oracle_stats(&cases);
    let s = structural_stats(&log);
    let t = temporal_stats(&log);
    let got = OracleStats {
        cases: s.total_cases,
        activities: s.total_activities,
        variants: s.total_variants,
        rework: s.total_cases_with_rework,
        first_millis: t.first_event_date.as_millis(),
        last_millis: t.last_event_date.as_millis(),
        span_secs: t.span_secs,
    };
    if got != want {
        return Err(format!("stats: engine {got:?}, oracle {want:?}"));
    }
    let dfg = build_dfg(&log);
    let edges: Vec<((String, String), u64)> = dfg.edges.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let want_edges = oracle_edges(&cases);
    if edges != want_edges {
        return Err(format!("edges: engine {edges:?}, oracle {want_edges:?}"));
    }
    let mut variants: Vec<(Vec<String>, u64)> =
        extract_variants(&log).into_iter().map(|v| (v.activity_sequence, v.frequency)).collect();
    variants.sort();
    let want_variants = oracle_variants(&cases);
    if variants != want_variants {
        return Err(format!("variants: engine {variants:?}, oracle {want_variants:?}"));
    }
    Ok(())
}
