//! Persisted KPI payloads, one schema per engine module, and the record
//! envelope they are stored in.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conformance::{check_conformance, conformance_summary, ConformanceReport, KindCount};
use crate::discovery::{build_dfg, discover_model, extract_variants, DirectlyFollowsGraph, ProcessModel, Thresholds, Variant};
use crate::kpi::{structural_stats, temporal_stats, Module, StructuralStats, TemporalStats};
use crate::log::{EventLog, LogId};
use crate::orgmining::{handover_network, resource_activity_matrix, workload_stats, HandoverNetwork, ResourceActivityMatrix, Workload};
use crate::performance::{performance_report, PerformanceReport, DEFAULT_MIN_FREQUENCY, DEFAULT_TOP_K};
use crate::time::Timestamp;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleOutputRecord {
    pub log_id: LogId,
    pub module: Module,
    pub schema_version: u32,
    pub created_at: Timestamp,
    pub payload: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DashboardPayload {
    pub structural: StructuralStats,
    pub temporal: TemporalStats,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryPayload {
    pub dfg: DirectlyFollowsGraph,
    pub variants: Vec<Variant>,
}

pub type PerformancePayload = PerformanceReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    Discovered,
    Supplied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformancePayload {
    pub model_source: ModelSource,
    /// Present when the model was discovered from the log itself.
    pub thresholds: Option<Thresholds>,
    pub degenerate_model: bool,
    pub model: ProcessModel,
    pub report: ConformanceReport,
    pub top_violation_kinds: Vec<KindCount>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgminingPayload {
    pub handover: HandoverNetwork,
    pub matrix: ResourceActivityMatrix,
    pub workload: Vec<Workload>,
    pub no_resources: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineOptions {
    pub thresholds: Thresholds,
    pub bottleneck_top_k: usize,
    pub bottleneck_min_frequency: u64,
    /// Reference model for conformance; discovered from the log when absent.
    pub reference_model: Option<ProcessModel>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            thresholds: Thresholds::default(),
            bottleneck_top_k: DEFAULT_TOP_K,
            bottleneck_min_frequency: DEFAULT_MIN_FREQUENCY,
            reference_model: None,
        }
    }
}

pub fn dashboard_payload(log: &EventLog) -> DashboardPayload {
    DashboardPayload { structural: structural_stats(log), temporal: temporal_stats(log) }
}

pub fn discovery_payload(log: &EventLog) -> DiscoveryPayload {
    DiscoveryPayload { dfg: build_dfg(log), variants: extract_variants(log) }
}

pub fn conformance_payload(log: &EventLog, options: &EngineOptions) -> ConformancePayload {
    let (model, source, thresholds, degenerate) = match &options.reference_model {
        Some(model) => (model.clone(), ModelSource::Supplied, None, false),
        None => {
            let d = discover_model(log, options.thresholds);
            (d.model, ModelSource::Discovered, Some(options.thresholds), d.degenerate)
        }
    };
    let report = check_conformance(&model, log);
    let top_violation_kinds = conformance_summary(&report, 4).top_kinds;
    ConformancePayload { model_source: source, thresholds, degenerate_model: degenerate, model, report, top_violation_kinds }
}

pub fn orgmining_payload(log: &EventLog) -> OrgminingPayload {
    let handover = handover_network(log);
    OrgminingPayload {
        handover: handover.network,
        matrix: resource_activity_matrix(log),
        workload: workload_stats(log),
        no_resources: handover.no_resources,
    }
}

/// Computes one module's payload as JSON. Deterministic for a given log and options.
pub fn compute_payload(log: &EventLog, module: Module, options: &EngineOptions) -> Value {
    let value = match module {
        Module::Dashboard => serde_json::to_value(dashboard_payload(log)),
        Module::Discovery => serde_json::to_value(discovery_payload(log)),
        Module::Performance => serde_json::to_value(performance_report(
            log,
            options.bottleneck_top_k,
            options.bottleneck_min_frequency,
        )),
        Module::Conformance => serde_json::to_value(conformance_payload(log, options)),
        Module::Orgmining => serde_json::to_value(orgmining_payload(log)),
    };
    value.expect("payload types serialize infallibly")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PayloadError {
    UnsupportedSchema { module: Module, found: u32 },
    Invalid { module: Module, message: String },
}

impl fmt::Display for PayloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayloadError::UnsupportedSchema { module, found } => write!(
                f,
                "{module} payload has schema_version {found}; this build reads up to {SCHEMA_VERSION}"
            ),
            PayloadError::Invalid { module, message } => write!(f, "invalid {module} payload: {message}"),
        }
    }
}

impl core::error::Error for PayloadError {}

fn decode<T: for<'de> Deserialize<'de>>(module: Module, payload: &Value) -> Result<T, PayloadError> {
    T::deserialize(payload).map_err(|e| PayloadError::Invalid { module, message: e.to_string() })
}

/// A payload decoded into its module's schema.
#[derive(Clone, Debug, PartialEq)]
pub enum ModulePayload {
    Dashboard(DashboardPayload),
    Discovery(DiscoveryPayload),
    Performance(PerformancePayload),
    Conformance(ConformancePayload),
    Orgmining(OrgminingPayload),
}

impl ModuleOutputRecord {
    /// Checks the schema version and decodes the payload.
    pub fn decode(&self) -> Result<ModulePayload, PayloadError> {
        if self.schema_version == 0 || self.schema_version > SCHEMA_VERSION {
            return Err(PayloadError::UnsupportedSchema { module: self.module, found: self.schema_version });
        }
        let m = self.module;
        Ok(match m {
            Module::Dashboard => ModulePayload::Dashboard(decode(m, &self.payload)?),
            Module::Discovery => ModulePayload::Discovery(decode(m, &self.payload)?),
            Module::Performance => ModulePayload::Performance(decode(m, &self.payload)?),
            Module::Conformance => ModulePayload::Conformance(decode(m, &self.payload)?),
            Module::Orgmining => ModulePayload::Orgmining(decode(m, &self.payload)?),
        })
    }
}
