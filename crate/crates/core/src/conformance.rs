//! Conformance checking by replaying cases over a [`ProcessModel`].
//!
//! A case of `n` events makes `n + 1` moves: one start check, `n - 1` edge
//! checks and one end check. Each permitted move scores 1; each rejected
//! move scores 0 and yields exactly one [`Violation`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::discovery::ProcessModel;
use crate::log::{Case, EventLog};

/// Declaration order is the tie-break order for summaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    UnknownActivity,
    DisallowedEdge,
    BadStart,
    BadEnd,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 4] =
        [ViolationKind::UnknownActivity, ViolationKind::DisallowedEdge, ViolationKind::BadStart, ViolationKind::BadEnd];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::UnknownActivity => "unknown-activity",
            ViolationKind::DisallowedEdge => "disallowed-edge",
            ViolationKind::BadStart => "bad-start",
            ViolationKind::BadEnd => "bad-end",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub case_id: String,
    pub position: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseReplay {
    pub allowed_moves: u64,
    pub total_moves: u64,
    pub violations: Vec<Violation>,
}

impl CaseReplay {
    pub fn fitness(&self) -> f64 {
        self.allowed_moves as f64 / self.total_moves as f64
    }
}

pub fn replay_case(model: &ProcessModel, case: &Case) -> CaseReplay {
    let events = case.events();
    let known = |i: usize| model.activities.contains(&events[i].activity);
    let mut violations = Vec::new();
    let mut reject = |position: usize, kind: ViolationKind, detail: String| {
        violations.push(Violation { case_id: case.case_id().into(), position, kind, detail });
    };

    let last = events.len() - 1;
    if !known(0) {
        reject(0, ViolationKind::UnknownActivity, format!("start activity {:?} not in model", events[0].activity));
    } else if !model.allowed_starts.contains(&events[0].activity) {
        reject(0, ViolationKind::BadStart, format!("{:?} is not an allowed start", events[0].activity));
    }
    for i in 1..events.len() {
        let (from, to) = (&events[i - 1].activity, &events[i].activity);
        if !known(i - 1) || !known(i) {
            let at = if known(i) { i - 1 } else { i };
            reject(at, ViolationKind::UnknownActivity, format!("edge {from:?} -> {to:?} touches an activity not in model"));
        } else if !model.allows_edge(from, to) {
            reject(i, ViolationKind::DisallowedEdge, format!("{from:?} -> {to:?}"));
        }
    }
    if !known(last) {
        reject(last, ViolationKind::UnknownActivity, format!("end activity {:?} not in model", events[last].activity));
    } else if !model.allowed_ends.contains(&events[last].activity) {
        reject(last, ViolationKind::BadEnd, format!("{:?} is not an allowed end", events[last].activity));
    }

    let total_moves = events.len() as u64 + 1;
    CaseReplay { allowed_moves: total_moves - violations.len() as u64, total_moves, violations }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub per_case_fitness: BTreeMap<String, f64>,
    pub log_fitness: f64,
    pub allowed_moves: u64,
    pub total_moves: u64,
    pub violations: Vec<Violation>,
    pub violating_case_count: u64,
}

/// Replays every case (in case-id order) and pools the moves:
/// `log_fitness = sum(allowed) / sum(total)`.
pub fn check_conformance(model: &ProcessModel, log: &EventLog) -> ConformanceReport {
    let mut report = ConformanceReport {
        per_case_fitness: BTreeMap::new(),
        log_fitness: 0.0,
        allowed_moves: 0,
        total_moves: 0,
        violations: Vec::new(),
        violating_case_count: 0,
    };
    for case in log.cases() {
        let replay = replay_case(model, case);
        report.per_case_fitness.insert(case.case_id().into(), replay.fitness());
        report.allowed_moves += replay.allowed_moves;
        report.total_moves += replay.total_moves;
        if replay.allowed_moves < replay.total_moves {
            report.violating_case_count += 1;
        }
        report.violations.extend(replay.violations);
    }
    report.log_fitness = report.allowed_moves as f64 / report.total_moves as f64;
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindCount {
    pub kind: ViolationKind,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformanceSummary {
    pub log_fitness: f64,
    pub violating_case_count: u64,
    pub top_kinds: Vec<KindCount>,
    pub text: String,
}

/// Violation kinds ranked by count (ties in declaration order), cut to `top_n`.
pub fn conformance_summary(report: &ConformanceReport, top_n: usize) -> ConformanceSummary {
    let mut top_kinds: Vec<KindCount> = ViolationKind::ALL
        .iter()
        .map(|&kind| KindCount { kind, count: report.violations.iter().filter(|v| v.kind == kind).count() as u64 })
        .filter(|k| k.count > 0)
        .collect();
    top_kinds.sort_by(|a, b| b.count.cmp(&a.count).then(a.kind.cmp(&b.kind)));
    top_kinds.truncate(top_n);

    let mut text = format!("fitness {:.3}, {} violating cases", report.log_fitness, report.violating_case_count);
    if !top_kinds.is_empty() {
        text.push_str("; top violations: ");
        let parts: Vec<String> = top_kinds.iter().map(|k| format!("{}:{}", k.kind, k.count)).collect();
        text.push_str(&parts.join(", "));
    }
    ConformanceSummary {
        log_fitness: report.log_fitness,
        violating_case_count: report.violating_case_count,
        top_kinds,
        text,
    }
}
