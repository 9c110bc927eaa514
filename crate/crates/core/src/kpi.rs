//! Dashboard KPIs and the engine module enumeration.

use alloc::collections::BTreeSet;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::log::EventLog;
use crate::time::Timestamp;

/// Engine modules in their fixed presentation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Dashboard,
    Discovery,
    Performance,
    Conformance,
    Orgmining,
}

impl Module {
    pub const ALL: [Module; 5] =
        [Module::Dashboard, Module::Discovery, Module::Performance, Module::Conformance, Module::Orgmining];

    pub fn as_str(self) -> &'static str {
        match self {
            Module::Dashboard => "dashboard",
            Module::Discovery => "discovery",
            Module::Performance => "performance",
            Module::Conformance => "conformance",
            Module::Orgmining => "orgmining",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Module::Dashboard => "Dashboard Module",
            Module::Discovery => "Process Discovery Module",
            Module::Performance => "Performance Mining Module",
            Module::Conformance => "Conformance Checking Module",
            Module::Orgmining => "Organizational Mining Module",
        }
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownModule;

impl fmt::Display for UnknownModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown module (expected dashboard, discovery, performance, conformance or orgmining)")
    }
}

impl core::error::Error for UnknownModule {}

impl FromStr for Module {
    type Err = UnknownModule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Module::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s.trim())).ok_or(UnknownModule)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralStats {
    pub total_cases: u64,
    /// Distinct activity labels.
    pub total_activities: u64,
    pub total_variants: u64,
    /// Cases in which some activity occurs at least twice, adjacent or not.
    pub total_cases_with_rework: u64,
}

pub fn structural_stats(log: &EventLog) -> StructuralStats {
    let mut variants = BTreeSet::new();
    let mut rework = 0;
    for case in log.cases() {
        let mut seen = BTreeSet::new();
        if !case.activities().all(|a| seen.insert(a)) {
            rework += 1;
        }
        variants.insert(case.activities().collect::<alloc::vec::Vec<_>>());
    }
    StructuralStats {
        total_cases: log.num_cases() as u64,
        total_activities: log.activities().len() as u64,
        total_variants: variants.len() as u64,
        total_cases_with_rework: rework,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalStats {
    pub first_event_date: Timestamp,
    pub last_event_date: Timestamp,
    pub span_secs: u64,
}

pub fn temporal_stats(log: &EventLog) -> TemporalStats {
    let first = log.events().map(|e| e.timestamp).min().expect("non-empty log");
    let last = log.events().map(|e| e.timestamp).max().expect("non-empty log");
    TemporalStats {
        first_event_date: first,
        last_event_date: last,
        span_secs: ((last.as_millis() - first.as_millis()) / 1000) as u64,
    }
}
