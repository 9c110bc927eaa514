//! File-backed store for logs, module outputs, sessions and ratings.
//!
//! Layout under the data directory:
//!
//! ```text
//! logs/{log_id}/events.csv            canonical case_id,activity,timestamp,resource
//! logs/{log_id}/metadata.json
//! logs/{log_id}/pseudonyms.json       raw resource name -> pseudonym
//! logs/{log_id}/deny_index.json       raw values that must never leave the host
//! logs/{log_id}/cleaning_report.json
//! logs/{log_id}/outputs/{module}.v{n}.json
//! logs/{log_id}/outputs/index.json    module -> [{version, created_at, options}]
//! sessions/{session_id}/session.json
//! sessions/{session_id}/results/{n}.json
//! ratings/ratings.jsonl
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.
//! Writers to one log are serialized in-process; separate processes sharing
//! a data directory are not coordinated.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use pmchat_core::log::PseudonymTable;
use pmchat_core::payload::ModuleOutputRecord;
use pmchat_core::redact::DenyIndex;
use pmchat_core::{Event, EventLog, LogId, LogMetadata, Module, Timestamp};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use pmchat_core::evaluation::RatingRecord;
use crate::ingest::{CleaningReport, Ingested};
use crate::session::{AnalysisResult, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub version: u32,
    pub created_at: Timestamp,
    /// Engine options the payload was computed with; the cache key.
    #[serde(default)]
    pub options: Value,
}

pub type OutputIndex = BTreeMap<Module, Vec<IndexEntry>>;

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    log_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    logs: Mutex<HashMap<String, Arc<EventLog>>>,
    sessions_lock: Mutex<()>,
    ratings_lock: Mutex<()>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}

impl Store {
    /// Opens (creating if needed) a data directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["logs", "sessions", "ratings"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Store {
            root,
            log_locks: Mutex::default(),
            logs: Mutex::default(),
            sessions_lock: Mutex::default(),
            ratings_lock: Mutex::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn log_dir(&self, id: &LogId) -> PathBuf {
        self.root.join("logs").join(id.as_str())
    }

    /// Resolves a user-supplied log id to a registered one.
    pub fn log_id(&self, raw: &str) -> Result<LogId> {
        LogId::parse(raw)
            .filter(|id| self.log_dir(id).join("events.csv").is_file())
            .ok_or_else(|| Error::not_found("log", raw))
    }

    /// Runs `f` while holding the single-writer lock of one log.
    pub fn with_log_lock<R>(&self, id: &LogId, f: impl FnOnce() -> R) -> R {
        let lock = self.log_locks.lock().unwrap().entry(id.as_str().to_string()).or_default().clone();
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        f()
    }

    /// Persists a freshly ingested log. Returns `false` when the same content
    /// was already registered, in which case nothing is rewritten.
    pub fn register_log(&self, ingested: &Ingested) -> Result<bool> {
        let id = ingested.log.log_id().clone();
        self.with_log_lock(&id, || {
            let dir = self.log_dir(&id);
            if dir.join("events.csv").is_file() {
                return Ok(false);
            }
            write_json(&dir.join("metadata.json"), ingested.log.metadata())?;
            write_json(&dir.join("pseudonyms.json"), &ingested.pseudonyms)?;
            write_json(&dir.join("deny_index.json"), &ingested.deny_index)?;
            write_json(&dir.join("cleaning_report.json"), &ingested.report)?;
            // events.csv last: its presence marks the log as registered
            write_atomic(&dir.join("events.csv"), ingested.log.canonical_csv().as_bytes())?;
            Ok(true)
        })
    }

    pub fn load_metadata(&self, id: &LogId) -> Result<LogMetadata> {
        read_json(&self.log_dir(id).join("metadata.json"))
    }

    pub fn load_deny_index(&self, id: &LogId) -> Result<DenyIndex> {
        read_json(&self.log_dir(id).join("deny_index.json"))
    }

    pub fn load_pseudonyms(&self, id: &LogId) -> Result<PseudonymTable> {
        read_json(&self.log_dir(id).join("pseudonyms.json"))
    }

    pub fn load_cleaning_report(&self, id: &LogId) -> Result<CleaningReport> {
        read_json(&self.log_dir(id).join("cleaning_report.json"))
    }

    /// Loads the normalized log, checking it still hashes to its id.
    pub fn load_log(&self, id: &LogId) -> Result<Arc<EventLog>> {
        if let Some(log) = self.logs.lock().unwrap().get(id.as_str()) {
            return Ok(log.clone());
        }
        let dir = self.log_dir(id);
        let path = dir.join("events.csv");
        if !path.is_file() {
            return Err(Error::not_found("log", id.as_str()));
        }
        let corrupt = |m: String| Error::Corrupt(format!("{}: {m}", path.display()));
        let mut reader = csv::Reader::from_path(&path).map_err(|e| corrupt(e.to_string()))?;
        let mut events = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| corrupt(e.to_string()))?;
            let ts = Timestamp::parse(&row[2]).map_err(|e| corrupt(e.to_string()))?;
            let mut event = Event::new(&row[0], &row[1], ts);
            event.resource = Some(row[3].to_string()).filter(|r| !r.is_empty());
            events.push(event);
        }
        let log = EventLog::from_events(events, self.load_metadata(id)?).map_err(|e| corrupt(e.to_string()))?.log;
        if log.log_id() != id {
            return Err(corrupt(format!("content hashes to {}, not {id}", log.log_id())));
        }
        let log = Arc::new(log);
        self.logs.lock().unwrap().insert(id.as_str().to_string(), log.clone());
        Ok(log)
    }

    fn outputs_dir(&self, id: &LogId) -> PathBuf {
        self.log_dir(id).join("outputs")
    }

    pub fn output_index(&self, id: &LogId) -> Result<OutputIndex> {
        self.log_id(id.as_str())?;
        let path = self.outputs_dir(id).join("index.json");
        if !path.is_file() {
            return Ok(OutputIndex::new());
        }
        read_json(&path)
    }

    /// Stores a new version of a module output. Earlier versions stay readable.
    pub fn store_output(&self, record: &ModuleOutputRecord, options: Value) -> Result<u32> {
        let id = &record.log_id;
        self.log_id(id.as_str())?;
        record
            .decode()
            .map_err(|e| Error::Invalid(format!("malformed {} payload: {e}", record.module)))?;
        self.with_log_lock(id, || {
            let mut index = self.output_index(id)?;
            let versions = index.entry(record.module).or_default();
            let version = versions.last().map_or(1, |e| e.version + 1);
            let file = self.outputs_dir(id).join(format!("{}.v{version}.json", record.module));
            write_json(&file, record)?;
            versions.push(IndexEntry { version, created_at: record.created_at, options });
            write_json(&self.outputs_dir(id).join("index.json"), &index)?;
            Ok(version)
        })
    }

    pub fn load_output_version(&self, id: &LogId, module: Module, version: u32) -> Result<ModuleOutputRecord> {
        let path = self.outputs_dir(id).join(format!("{module}.v{version}.json"));
        if !path.is_file() {
            return Err(Error::not_found("module output", format!("{id}/{module}.v{version}")));
        }
        read_json(&path)
    }

    /// Latest record and index entry per module; modules never computed are absent.
    pub fn latest_outputs(
        &self,
        id: &LogId,
        modules: Option<&[Module]>,
    ) -> Result<BTreeMap<Module, (IndexEntry, ModuleOutputRecord)>> {
        let index = self.output_index(id)?;
        let mut out = BTreeMap::new();
        for (module, versions) in index {
            if modules.is_some_and(|m| !m.contains(&module)) {
                continue;
            }
            if let Some(entry) = versions.last() {
                let record = self.load_output_version(id, module, entry.version)?;
                out.insert(module, (entry.clone(), record));
            }
        }
        Ok(out)
    }

    pub fn load_outputs(&self, id: &LogId, modules: Option<&[Module]>) -> Result<BTreeMap<Module, ModuleOutputRecord>> {
        Ok(self.latest_outputs(id, modules)?.into_iter().map(|(m, (_, r))| (m, r)).collect())
    }

    pub fn output_history(&self, id: &LogId, module: Module) -> Result<Vec<ModuleOutputRecord>> {
        let index = self.output_index(id)?;
        index
            .get(&module)
            .into_iter()
            .flatten()
            .map(|e| self.load_output_version(id, module, e.version))
            .collect()
    }

    fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(session_id)
    }

    /// Allocates the next monotonic session id (`s000001`, `s000002`, ...).
    pub fn allocate_session_id(&self) -> Result<String> {
        let _guard = self.sessions_lock.lock().unwrap();
        let mut next = 1 + fs::read_dir(self.root.join("sessions"))?
            .filter_map(|e| e.ok()?.file_name().to_str()?.strip_prefix('s')?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        loop {
            let id = format!("s{next:06}");
            match fs::create_dir(self.session_dir(&id)) {
                Ok(()) => return Ok(id),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn save_session(&self, session: &Session) -> Result<()> {
        write_json(&self.session_dir(&session.session_id).join("session.json"), session)
    }

    pub fn load_session(&self, session_id: &str) -> Result<Session> {
        let valid = session_id.len() > 1 && session_id.bytes().all(|b| b.is_ascii_alphanumeric());
        let path = self.session_dir(session_id).join("session.json");
        if !valid || !path.is_file() {
            return Err(Error::not_found("session", session_id));
        }
        read_json(&path)
    }

    pub fn save_result(&self, result: &AnalysisResult) -> Result<()> {
        let path = self.session_dir(&result.session_id).join("results").join(format!("{}.json", result.sequence));
        write_json(&path, result)
    }

    pub fn load_results(&self, session_id: &str) -> Result<Vec<AnalysisResult>> {
        self.load_session(session_id)?;
        let dir = self.session_dir(session_id).join("results");
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut results: Vec<AnalysisResult> = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                results.push(read_json(&path)?);
            }
        }
        results.sort_by_key(|r| r.sequence);
        Ok(results)
    }

    fn ratings_path(&self) -> PathBuf {
        self.root.join("ratings").join("ratings.jsonl")
    }

    /// Appends ratings, assigning ids `rt000001`, ... in arrival order.
    pub fn append_ratings(&self, ratings: Vec<RatingRecord>) -> Result<Vec<String>> {
        let _guard = self.ratings_lock.lock().unwrap();
        let existing = self.load_ratings_unlocked()?.len();
        let mut lines = String::new();
        let mut ids = Vec::with_capacity(ratings.len());
        for (i, mut rating) in ratings.into_iter().enumerate() {
            rating.rating_id = format!("rt{:06}", existing + i + 1);
            ids.push(rating.rating_id.clone());
            lines.push_str(&serde_json::to_string(&rating)?);
            lines.push('\n');
        }
        let mut file = fs::OpenOptions::new().create(true).append(true).open(self.ratings_path())?;
        file.write_all(lines.as_bytes())?;
        file.sync_all()?;
        Ok(ids)
    }

    fn load_ratings_unlocked(&self) -> Result<Vec<RatingRecord>> {
        let path = self.ratings_path();
        if !path.is_file() {
            return Ok(Vec::new());
        }
        fs::read_to_string(&path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Corrupt(format!("{} line {}: {e}", path.display(), i + 1)))
            })
            .collect()
    }

    pub fn load_ratings(&self) -> Result<Vec<RatingRecord>> {
        let _guard = self.ratings_lock.lock().unwrap();
        self.load_ratings_unlocked()
    }
}
