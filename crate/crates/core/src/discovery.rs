//! Process discovery: directly-follows graph, variants, dependency measure and
//! a thresholded-DFG process model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::log::EventLog;
use crate::pairmap;

pub type Edge = (String, String);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectlyFollowsGraph {
    pub activity_frequencies: BTreeMap<String, u64>,
    #[serde(with = "pairmap")]
    pub edges: BTreeMap<Edge, u64>,
    pub start_activities: BTreeMap<String, u64>,
    pub end_activities: BTreeMap<String, u64>,
}

impl DirectlyFollowsGraph {
    pub fn edge_frequency(&self, from: &str, to: &str) -> u64 {
        // BTreeMap<(String, String)> cannot be probed with borrowed pairs.
        self.edges
            .range((String::from(from), String::from(to))..)
            .next()
            .filter(|((f, t), _)| f == from && t == to)
            .map_or(0, |(_, n)| *n)
    }

    /// Graphviz rendering; edge labels carry frequencies.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dfg {\n  rankdir=LR;\n");
        out.push_str("  \"__start__\" [shape=circle,label=\"\"];\n  \"__end__\" [shape=doublecircle,label=\"\"];\n");
        for (activity, n) in &self.activity_frequencies {
            out.push_str(&format!("  \"{}\" [shape=box,label=\"{} ({n})\"];\n", dot_escape(activity), dot_escape(activity)));
        }
        for (activity, n) in &self.start_activities {
            out.push_str(&format!("  \"__start__\" -> \"{}\" [label=\"{n}\"];\n", dot_escape(activity)));
        }
        for ((from, to), n) in &self.edges {
            out.push_str(&format!("  \"{}\" -> \"{}\" [label=\"{n}\"];\n", dot_escape(from), dot_escape(to)));
        }
        for (activity, n) in &self.end_activities {
            out.push_str(&format!("  \"{}\" -> \"__end__\" [label=\"{n}\"];\n", dot_escape(activity)));
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn build_dfg(log: &EventLog) -> DirectlyFollowsGraph {
    let mut dfg = DirectlyFollowsGraph::default();
    for case in log.cases() {
        *dfg.start_activities.entry(case.first().activity.clone()).or_default() += 1;
        *dfg.end_activities.entry(case.last().activity.clone()).or_default() += 1;
        for event in case.events() {
            *dfg.activity_frequencies.entry(event.activity.clone()).or_default() += 1;
        }
        for pair in case.events().windows(2) {
            *dfg.edges.entry((pair[0].activity.clone(), pair[1].activity.clone())).or_default() += 1;
        }
    }
    dfg
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub activity_sequence: Vec<String>,
    pub frequency: u64,
    pub example_case_id: String,
}

/// Distinct activity sequences, most frequent first, ties by sequence.
/// The example case is the lowest case id carrying the variant.
pub fn extract_variants(log: &EventLog) -> Vec<Variant> {
    let mut by_sequence: BTreeMap<Vec<String>, Variant> = BTreeMap::new();
    for case in log.cases() {
        let sequence: Vec<String> = case.activities().map(String::from).collect();
        by_sequence
            .entry(sequence.clone())
            .and_modify(|v| v.frequency += 1)
            .or_insert_with(|| Variant {
                activity_sequence: sequence,
                frequency: 1,
                example_case_id: case.case_id().into(),
            });
    }
    let mut variants: Vec<Variant> = by_sequence.into_values().collect();
    variants.sort_by(|a, b| {
        b.frequency.cmp(&a.frequency).then_with(|| a.activity_sequence.cmp(&b.activity_sequence))
    });
    variants
}

/// `(|a>b| - |b>a|) / (|a>b| + |b>a| + 1)`, with absent edges counted as 0.
pub fn dependency_measure(dfg: &DirectlyFollowsGraph, a: &str, b: &str) -> f64 {
    let ab = dfg.edge_frequency(a, b) as f64;
    let ba = dfg.edge_frequency(b, a) as f64;
    (ab - ba) / (ab + ba + 1.0)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub activities: BTreeSet<String>,
    pub allowed_edges: BTreeSet<Edge>,
    pub allowed_starts: BTreeSet<String>,
    pub allowed_ends: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelError {
    /// An edge, start or end refers to an activity outside `activities`.
    UnknownActivity(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::UnknownActivity(a) => write!(f, "model references undeclared activity {a:?}"),
        }
    }
}

impl core::error::Error for ModelError {}

impl ProcessModel {
    /// Checks that starts, ends and edge endpoints are declared activities.
    pub fn validate(&self) -> Result<(), ModelError> {
        let endpoints = self.allowed_edges.iter().flat_map(|(a, b)| [a, b]);
        for activity in self.allowed_starts.iter().chain(&self.allowed_ends).chain(endpoints) {
            if !self.activities.contains(activity) {
                return Err(ModelError::UnknownActivity(activity.clone()));
            }
        }
        Ok(())
    }

    pub fn allows_edge(&self, from: &str, to: &str) -> bool {
        self.allowed_edges.contains(&(String::from(from), String::from(to)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// In `[0, 1)`. Exactly 0 disables dependency filtering.
    pub dependency: f64,
    /// At least 1.
    pub frequency: u64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { dependency: 0.5, frequency: 2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdError {
    Dependency(f64),
    Frequency(u64),
}

impl fmt::Display for ThresholdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdError::Dependency(d) => write!(f, "dependency threshold {d} outside [0, 1)"),
            ThresholdError::Frequency(n) => write!(f, "frequency threshold {n} must be positive"),
        }
    }
}

impl core::error::Error for ThresholdError {}

impl Thresholds {
    pub fn new(dependency: f64, frequency: u64) -> Result<Self, ThresholdError> {
        if !(0.0..1.0).contains(&dependency) {
            return Err(ThresholdError::Dependency(dependency));
        }
        if frequency == 0 {
            return Err(ThresholdError::Frequency(frequency));
        }
        Ok(Thresholds { dependency, frequency })
    }

    fn keeps_edge(&self, dfg: &DirectlyFollowsGraph, from: &str, to: &str, frequency: u64) -> bool {
        frequency >= self.frequency
            && (self.dependency == 0.0 || dependency_measure(dfg, from, to) >= self.dependency)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscoveredModel {
    pub model: ProcessModel,
    /// Set when the thresholds excluded every edge of a log that had some.
    pub degenerate: bool,
}

/// Thresholded-DFG discovery. An edge survives when its frequency reaches
/// `frequency` and its dependency measure reaches `dependency` (a dependency
/// threshold of 0 keeps every frequent edge, so `(0, 1)` reproduces the DFG).
pub fn discover_model(log: &EventLog, thresholds: Thresholds) -> DiscoveredModel {
    let dfg = build_dfg(log);
    let allowed_edges: BTreeSet<Edge> = dfg
        .edges
        .iter()
        .filter(|((a, b), n)| thresholds.keeps_edge(&dfg, a, b, **n))
        .map(|(edge, _)| edge.clone())
        .collect();
    let frequent = |counts: &BTreeMap<String, u64>| -> BTreeSet<String> {
        counts.iter().filter(|(_, n)| **n >= thresholds.frequency).map(|(a, _)| a.clone()).collect()
    };
    let degenerate = allowed_edges.is_empty() && !dfg.edges.is_empty();
    DiscoveredModel {
        model: ProcessModel {
            activities: dfg.activity_frequencies.keys().cloned().collect(),
            allowed_edges,
            allowed_starts: frequent(&dfg.start_activities),
            allowed_ends: frequent(&dfg.end_activities),
        },
        degenerate,
    }
}
