//! Organizational mining over pseudonymized resources.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::discovery::dot_escape;
use crate::log::EventLog;
use crate::pairmap;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverNetwork {
    pub resources: BTreeSet<String>,
    #[serde(with = "pairmap")]
    pub edges: BTreeMap<(String, String), u64>,
}

impl HandoverNetwork {
    pub fn total_handovers(&self) -> u64 {
        self.edges.values().sum()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph handover {\n");
        for r in &self.resources {
            out.push_str(&format!("  \"{}\" [shape=ellipse];\n", dot_escape(r)));
        }
        for ((from, to), n) in &self.edges {
            out.push_str(&format!("  \"{}\" -> \"{}\" [label=\"{n}\"];\n", dot_escape(from), dot_escape(to)));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Handover {
    pub network: HandoverNetwork,
    /// True when no event carries a resource.
    pub no_resources: bool,
}

/// Counts `resource(prev) -> resource(next)` for consecutive events in a case.
/// Pairs where either side lacks a resource are skipped; self-handovers count.
pub fn handover_network(log: &EventLog) -> Handover {
    let mut network = HandoverNetwork {
        resources: log.resources().into_iter().map(String::from).collect(),
        edges: BTreeMap::new(),
    };
    for case in log.cases() {
        for pair in case.events().windows(2) {
            if let (Some(a), Some(b)) = (&pair[0].resource, &pair[1].resource) {
                *network.edges.entry((a.clone(), b.clone())).or_default() += 1;
            }
        }
    }
    let no_resources = network.resources.is_empty();
    Handover { network, no_resources }
}

/// resource -> activity -> event count.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceActivityMatrix {
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
}

impl ResourceActivityMatrix {
    pub fn get(&self, resource: &str, activity: &str) -> u64 {
        self.counts.get(resource).and_then(|row| row.get(activity)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flat_map(|row| row.values()).sum()
    }
}

pub fn resource_activity_matrix(log: &EventLog) -> ResourceActivityMatrix {
    let mut matrix = ResourceActivityMatrix::default();
    for event in log.events() {
        if let Some(r) = &event.resource {
            *matrix.counts.entry(r.clone()).or_default().entry(event.activity.clone()).or_default() += 1;
        }
    }
    matrix
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub resource: String,
    pub events: u64,
}

/// Events per resource, busiest first, ties by resource name.
pub fn workload_stats(log: &EventLog) -> Vec<Workload> {
    let matrix = resource_activity_matrix(log);
    let mut workload: Vec<Workload> = matrix
        .counts
        .into_iter()
        .map(|(resource, row)| Workload { resource, events: row.values().sum() })
        .collect();
    workload.sort_by(|a, b| b.events.cmp(&a.events).then_with(|| a.resource.cmp(&b.resource)));
    workload
}
