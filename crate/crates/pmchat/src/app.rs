//! The service layer: one [`App`] binds the store, the engine, the prompt
//! builder and the gateway. HTTP and CLI are thin wrappers around it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use pmchat_core::evaluation::{compare_styles, distribution, DistributionReport, GroupBy, RatingFilter, StyleComparison};
use pmchat_core::payload::{compute_payload, EngineOptions, ModuleOutputRecord, SCHEMA_VERSION};
use pmchat_core::prompt::{RenderBudget, DEFAULT_MAX_PROMPT_TOKENS};
use pmchat_core::{LogMetadata, Module};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clock::Clock;
use crate::error::{Error, Result, RowError};
use crate::gateway::{Gateway, RetryPolicy};
use crate::ingest::{parse_csv, CleaningReport, ColumnMapping};
use crate::ratings::{parse_ratings_csv, RatingInput};
use crate::store::Store;

pub const DEFAULT_HISTORY_BUDGET_TOKENS: usize = 16_000;

#[derive(Clone, Debug)]
pub struct AppConfig {
    pub model_name: String,
    pub retry: RetryPolicy,
    pub prompt_budget: RenderBudget,
    /// Token budget for the whole conversation sent with each request.
    pub history_budget_tokens: usize,
    pub engine: EngineOptions,
    /// Record an NA rating whenever an analysis ends NotAvailable.
    pub auto_rate_na: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            model_name: "mock".into(),
            retry: RetryPolicy::default(),
            prompt_budget: RenderBudget { max_prompt_tokens: DEFAULT_MAX_PROMPT_TOKENS },
            history_budget_tokens: DEFAULT_HISTORY_BUDGET_TOKENS,
            engine: EngineOptions::default(),
            auto_rate_na: false,
        }
    }
}

pub struct App {
    pub(crate) store: Store,
    pub(crate) gateway: Gateway,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) config: AppConfig,
    analyze_queues: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub log_id: String,
    pub cases: usize,
    pub events: usize,
    /// False when identical content was already registered.
    pub newly_registered: bool,
    pub cleaning_report: CleaningReport,
    pub row_errors: Vec<RowError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutcome {
    pub module: Module,
    pub version: u32,
    pub cache_hit: bool,
    pub record: ModuleOutputRecord,
}

fn keyed_lock(map: &Mutex<HashMap<String, Arc<Mutex<()>>>>, key: &str) -> Arc<Mutex<()>> {
    map.lock().unwrap().entry(key.to_string()).or_default().clone()
}

/// The engine options that influence a module's payload, as a cache key.
pub fn options_key(module: Module, options: &EngineOptions) -> Value {
    match module {
        Module::Dashboard | Module::Discovery | Module::Orgmining => Value::Null,
        Module::Performance => json!({
            "bottleneck_top_k": options.bottleneck_top_k,
            "bottleneck_min_frequency": options.bottleneck_min_frequency,
        }),
        Module::Conformance => json!({
            "thresholds": options.thresholds,
            "reference_model": options.reference_model,
        }),
    }
}

impl App {
    pub fn new(store: Store, gateway: Gateway, clock: Arc<dyn Clock>, config: AppConfig) -> Self {
        App {
            store,
            gateway,
            clock,
            config,
            analyze_queues: Mutex::default(),
            session_locks: Mutex::default(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub(crate) fn session_lock(&self, session_id: &str) -> Arc<Mutex<()>> {
        keyed_lock(&self.session_locks, session_id)
    }

    pub fn ingest(&self, csv: &[u8], mapping: &ColumnMapping, metadata: LogMetadata) -> Result<IngestSummary> {
        let ingested = parse_csv(csv, mapping, metadata)?;
        let newly_registered = self.store.register_log(&ingested)?;
        Ok(IngestSummary {
            log_id: ingested.log.log_id().to_string(),
            cases: ingested.log.num_cases(),
            events: ingested.log.num_events(),
            newly_registered,
            cleaning_report: ingested.report,
            row_errors: ingested.row_errors,
        })
    }

    /// Computes and stores one module's KPIs. Requests for the same log are
    /// queued; an unchanged log with unchanged options is a cache hit and
    /// writes nothing.
    pub fn analyze(&self, log_id: &str, module: Module) -> Result<AnalyzeOutcome> {
        self.analyze_with(log_id, module, &self.config.engine)
    }

    pub fn analyze_with(&self, log_id: &str, module: Module, options: &EngineOptions) -> Result<AnalyzeOutcome> {
        let id = self.store.log_id(log_id)?;
        let queue = keyed_lock(&self.analyze_queues, id.as_str());
        let _turn = queue.lock().unwrap_or_else(|p| p.into_inner());
        let key = options_key(module, options);
        if let Some((entry, record)) = self.store.latest_outputs(&id, Some(&[module]))?.remove(&module) {
            if entry.options == key && record.schema_version == SCHEMA_VERSION {
                return Ok(AnalyzeOutcome { module, version: entry.version, cache_hit: true, record });
            }
        }
        let log = self.store.load_log(&id)?;
        let record = ModuleOutputRecord {
            log_id: id.clone(),
            module,
            schema_version: SCHEMA_VERSION,
            created_at: self.clock.now(),
            payload: compute_payload(&log, module, options),
        };
        let version = self.store.store_output(&record, key)?;
        Ok(AnalyzeOutcome { module, version, cache_hit: false, record })
    }

    /// The latest stored payload, or a fresh (unstored) computation.
    pub fn module_payload(&self, log_id: &str, module: Module) -> Result<Value> {
        let id = self.store.log_id(log_id)?;
        if let Some(record) = self.store.load_outputs(&id, Some(&[module]))?.remove(&module) {
            return Ok(record.payload);
        }
        let log = self.store.load_log(&id)?;
        Ok(compute_payload(&log, module, &self.config.engine))
    }

    /// Validates and stores ratings; either all rows are stored or none.
    pub fn record_ratings(&self, inputs: Vec<RatingInput>) -> Result<Vec<String>> {
        let mut records = Vec::with_capacity(inputs.len());
        let mut errors = Vec::new();
        for (i, input) in inputs.into_iter().enumerate() {
            match input.into_record() {
                Ok(r) => records.push(r),
                Err(message) => errors.push(RowError { line: i as u64 + 1, message }),
            }
        }
        if !errors.is_empty() {
            return Err(Error::RatingRows(errors));
        }
        self.store.append_ratings(records)
    }

    pub fn import_ratings_csv(&self, raw: &[u8]) -> Result<Vec<String>> {
        let (records, errors) = parse_ratings_csv(raw)?;
        if !errors.is_empty() {
            return Err(Error::RatingRows(errors));
        }
        if records.is_empty() {
            return Err(Error::Invalid("the ratings file has no rows".into()));
        }
        self.store.append_ratings(records)
    }

    pub fn rating_distribution(&self, filter: &RatingFilter, group_by: GroupBy) -> Result<DistributionReport> {
        let ratings = self.store.load_ratings()?;
        distribution(&ratings, filter, group_by).map_err(|e| Error::Precondition(e.to_string()))
    }

    pub fn compare_styles(&self, filter: &RatingFilter) -> Result<StyleComparison> {
        let ratings: Vec<_> = self.store.load_ratings()?.into_iter().filter(|r| filter.matches(r)).collect();
        Ok(compare_styles(&ratings))
    }
}
