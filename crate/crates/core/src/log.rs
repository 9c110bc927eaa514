//! The canonical event log: cases of time-ordered events with pseudonymized
//! resources, identified by a content hash.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csvfmt;
use crate::time::Timestamp;

/// Header of the canonical `events.csv` serialization.
pub const CANONICAL_HEADER: [&str; 4] = ["case_id", "activity", "timestamp", "resource"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: Timestamp,
    pub resource: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, timestamp: Timestamp) -> Self {
        Event {
            case_id: case_id.into(),
            activity: activity.into(),
            timestamp,
            resource: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_resource(mut self, resource: impl Into<String>) -> Self {
        self.resource = Some(resource.into());
        self
    }
}

/// One process instance. Events are sorted by timestamp, ties in input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Case {
    case_id: String,
    events: Vec<Event>,
}

impl Case {
    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }

    pub fn first(&self) -> &Event {
        &self.events[0]
    }

    pub fn last(&self) -> &Event {
        &self.events[self.events.len() - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogMetadata {
    pub sector: String,
    pub economic_activity: String,
    pub process_name: String,
    pub organization: String,
}

pub const UNKNOWN: &str = "unknown";

impl Default for LogMetadata {
    fn default() -> Self {
        LogMetadata {
            sector: UNKNOWN.into(),
            economic_activity: UNKNOWN.into(),
            process_name: UNKNOWN.into(),
            organization: UNKNOWN.into(),
        }
    }
}

impl LogMetadata {
    /// Trims every field and replaces blanks with `"unknown"`.
    pub fn sanitized(self) -> Self {
        fn fix(s: String) -> String {
            let t = s.trim();
            if t.is_empty() {
                UNKNOWN.into()
            } else {
                t.into()
            }
        }
        LogMetadata {
            sector: fix(self.sector),
            economic_activity: fix(self.economic_activity),
            process_name: fix(self.process_name),
            organization: fix(self.organization),
        }
    }
}

/// First 12 hex digits of the SHA-256 of the canonical event stream.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogId(String);

impl LogId {
    pub fn of_canonical(canonical: &str) -> Self {
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            let _ = fmt::Write::write_fmt(&mut hex, format_args!("{byte:02x}"));
        }
        LogId(hex)
    }

    /// Accepts an externally supplied id if it has the log-id shape.
    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 12 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
            .then(|| LogId(s.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogError {
    /// No event survived cleaning or filtering.
    Empty,
    /// A date range whose start lies after its end.
    InvalidRange { start: Timestamp, end: Timestamp },
}

impl fmt::Display for LogError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogError::Empty => f.write_str("event log is empty"),
            LogError::InvalidRange { start, end } => {
                write!(f, "invalid date range: start {start} is after end {end}")
            }
        }
    }
}

impl core::error::Error for LogError {}

/// Raw resource name to pseudonym (`r1`, `r2`, ...), numbered by first
/// appearance in normalized order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudonymTable {
    entries: Vec<(String, String)>,
}

impl PseudonymTable {
    pub fn pseudonym(&self, raw: &str) -> Option<&str> {
        self.entries.iter().find(|(r, _)| r == raw).map(|(_, p)| p.as_str())
    }

    pub fn raw_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(r, _)| r.as_str())
    }

    pub fn pseudonyms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(_, p)| p.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Result of normalizing a batch of raw events.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub log: EventLog,
    pub pseudonyms: PseudonymTable,
    /// Events dropped because case id or activity was blank.
    pub blank_dropped: usize,
    /// Events dropped as exact `(case_id, activity, timestamp, resource)` duplicates.
    pub duplicates_dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventLog {
    log_id: LogId,
    cases: BTreeMap<String, Case>,
    metadata: LogMetadata,
}

impl EventLog {
    /// Cleans, groups, sorts, deduplicates and pseudonymizes raw events.
    ///
    /// Cases are keyed (and iterated) by case id. Within a case, events are sorted
    /// by timestamp with ties kept in input order.
    pub fn from_events(
        events: impl IntoIterator<Item = Event>,
        metadata: LogMetadata,
    ) -> Result<Normalized, LogError> {
        let mut blank_dropped = 0;
        let mut grouped: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for mut event in events {
            trim_in_place(&mut event.case_id);
            trim_in_place(&mut event.activity);
            if let Some(r) = event.resource.as_mut() {
                trim_in_place(r);
            }
            if event.resource.as_deref() == Some("") {
                event.resource = None;
            }
            if event.case_id.is_empty() || event.activity.is_empty() {
                blank_dropped += 1;
                continue;
            }
            grouped.entry(event.case_id.clone()).or_default().push(event);
        }

        let mut duplicates_dropped = 0;
        for events in grouped.values_mut() {
            events.sort_by_key(|e| e.timestamp);
            let mut seen = BTreeSet::new();
            events.retain(|e| {
                let fresh = seen.insert((e.activity.clone(), e.timestamp, e.resource.clone()));
                if !fresh {
                    duplicates_dropped += 1;
                }
                fresh
            });
        }

        let mut table = PseudonymTable::default();
        for events in grouped.values_mut() {
            for event in events.iter_mut() {
                if let Some(raw) = event.resource.take() {
                    let pseudo = match table.pseudonym(&raw) {
                        Some(p) => p.to_string(),
                        None => {
                            let p = format!("r{}", table.len() + 1);
                            table.entries.push((raw, p.clone()));
                            p
                        }
                    };
                    event.resource = Some(pseudo);
                }
            }
        }

        let cases = grouped
            .into_iter()
            .map(|(case_id, events)| (case_id.clone(), Case { case_id, events }))
            .collect();
        let log = Self::assemble(cases, metadata.sanitized())?;
        Ok(Normalized { log, pseudonyms: table, blank_dropped, duplicates_dropped })
    }

    fn assemble(cases: BTreeMap<String, Case>, metadata: LogMetadata) -> Result<Self, LogError> {
        if cases.is_empty() {
            return Err(LogError::Empty);
        }
        let mut log = EventLog { log_id: LogId(String::new()), cases, metadata };
        log.log_id = LogId::of_canonical(&log.canonical_csv());
        Ok(log)
    }

    pub fn log_id(&self) -> &LogId {
        &self.log_id
    }

    pub fn metadata(&self) -> &LogMetadata {
        &self.metadata
    }

    pub fn with_metadata(mut self, metadata: LogMetadata) -> Self {
        self.metadata = metadata.sanitized();
        self
    }

    pub fn cases(&self) -> impl ExactSizeIterator<Item = &Case> {
        self.cases.values()
    }

    pub fn case(&self, case_id: &str) -> Option<&Case> {
        self.cases.get(case_id)
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.cases.values().flat_map(|c| c.events.iter())
    }

    pub fn num_cases(&self) -> usize {
        self.cases.len()
    }

    pub fn num_events(&self) -> usize {
        self.cases.values().map(Case::len).sum()
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        self.events().map(|e| e.activity.as_str()).collect()
    }

    pub fn resources(&self) -> BTreeSet<&str> {
        self.events().filter_map(|e| e.resource.as_deref()).collect()
    }

    /// The canonical serialization: `case_id,activity,timestamp,resource` with
    /// ISO-8601 UTC timestamps, cases in id order, events in normalized order.
    pub fn canonical_csv(&self) -> String {
        let mut out = String::new();
        csvfmt::push_record(&mut out, CANONICAL_HEADER);
        for event in self.events() {
            let ts = event.timestamp.to_iso();
            csvfmt::push_record(
                &mut out,
                [
                    event.case_id.as_str(),
                    event.activity.as_str(),
                    ts.as_str(),
                    event.resource.as_deref().unwrap_or(""),
                ],
            );
        }
        out
    }
}

fn trim_in_place(s: &mut String) {
    let t = s.trim();
    if t.len() != s.len() {
        *s = t.to_string();
    }
}

/// Re-runs normalization. Idempotent on normalized logs.
pub fn normalize(log: &EventLog) -> EventLog {
    EventLog::from_events(log.events().cloned(), log.metadata.clone())
        .expect("a non-empty log stays non-empty")
        .log
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterCriteria {
    /// Inclusive `[start, end]` range on event timestamps.
    pub date_range: Option<(Timestamp, Timestamp)>,
    pub activities: Option<BTreeSet<String>>,
    pub case_ids: Option<BTreeSet<String>>,
}

impl FilterCriteria {
    fn keeps(&self, event: &Event) -> bool {
        self.date_range.is_none_or(|(s, e)| event.timestamp >= s && event.timestamp <= e)
            && self.activities.as_ref().is_none_or(|set| set.contains(&event.activity))
            && self.case_ids.as_ref().is_none_or(|set| set.contains(&event.case_id))
    }
}

/// Keeps exactly the events matching every supplied criterion. Cases left
/// empty are removed and the log id is recomputed.
pub fn filter_log(log: &EventLog, criteria: &FilterCriteria) -> Result<EventLog, LogError> {
    if let Some((start, end)) = criteria.date_range {
        if start > end {
            return Err(LogError::InvalidRange { start, end });
        }
    }
    let cases = log
        .cases
        .iter()
        .filter_map(|(id, case)| {
            let events: Vec<Event> = case.events.iter().filter(|e| criteria.keeps(e)).cloned().collect();
            (!events.is_empty()).then(|| (id.clone(), Case { case_id: id.clone(), events }))
        })
        .collect();
    EventLog::assemble(cases, log.metadata.clone())
}

/// Fixture L1: three cases on 2024-01-01, one with rework, three variants.
pub fn fixture_l1_events() -> Vec<Event> {
    let t = Timestamp::from_millis(1_704_067_200_000);
    let row = |case: &str, act: &str, minutes: i64, res: &str| {
        Event::new(case, act, t.add_minutes(minutes)).with_resource(res)
    };
    alloc::vec![
        row("c1", "A", 0, "r1"),
        row("c1", "B", 10, "r1"),
        row("c1", "C", 20, "r2"),
        row("c2", "A", 0, "r1"),
        row("c2", "B", 5, "r2"),
        row("c2", "B", 8, "r2"),
        row("c2", "C", 12, "r3"),
        row("c3", "A", 0, "r1"),
        row("c3", "C", 7, "r2"),
    ]
}

pub fn fixture_l1() -> EventLog {
    EventLog::from_events(fixture_l1_events(), LogMetadata::default())
        .expect("fixture is non-empty")
        .log
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ids(log: &EventLog) -> Vec<(String, Vec<String>)> {
        log.cases()
            .map(|c| (c.case_id().into(), c.activities().map(String::from).collect()))
            .collect()
    }

    #[test]
    fn l1_shape() {
        let log = fixture_l1();
        assert_eq!(log.num_cases(), 3);
        assert_eq!(log.num_events(), 9);
        assert_eq!(log.log_id().as_str().len(), 12);
        assert!(LogId::parse(log.log_id().as_str()).is_some());
    }

    #[test]
    fn normalize_is_idempotent() {
        let log = fixture_l1();
        let again = normalize(&log);
        assert_eq!(again, log);
        assert_eq!(again.canonical_csv(), log.canonical_csv());
    }

    #[test]
    fn shuffled_input_gives_same_log() {
        let mut events = fixture_l1_events();
        events.swap(0, 2);
        events.swap(1, 8);
        events.reverse();
        let shuffled = EventLog::from_events(events, LogMetadata::default()).unwrap().log;
        assert_eq!(shuffled.log_id(), fixture_l1().log_id());
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let t = Timestamp::from_millis(0);
        let log = EventLog::from_events(
            vec![Event::new("k", "X", t), Event::new("k", "Y", t)],
            LogMetadata::default(),
        )
        .unwrap()
        .log;
        assert_eq!(ids(&log), vec![("k".into(), vec!["X".into(), "Y".into()])]);
        let log = EventLog::from_events(
            vec![Event::new("k", "Y", t), Event::new("k", "X", t)],
            LogMetadata::default(),
        )
        .unwrap()
        .log;
        assert_eq!(ids(&log)[0].1, vec!["Y", "X"]);
    }

    #[test]
    fn duplicates_and_blanks_are_dropped() {
        let mut events = fixture_l1_events();
        events.push(events[4].clone());
        events.push(Event::new("c9", " ", Timestamp::from_millis(0)));
        let n = EventLog::from_events(events, LogMetadata::default()).unwrap();
        assert_eq!(n.duplicates_dropped, 1);
        assert_eq!(n.blank_dropped, 1);
        assert_eq!(n.log.num_events(), 9);
    }

    #[test]
    fn resources_are_pseudonymized_by_first_appearance() {
        let raw = ["alice", "alice", "bob", "alice", "bob", "bob", "carol", "alice", "bob"];
        let events = fixture_l1_events()
            .into_iter()
            .zip(raw)
            .map(|(mut e, r)| {
                e.resource = Some(r.into());
                e
            });
        let n = EventLog::from_events(events, LogMetadata::default()).unwrap();
        assert_eq!(n.log.log_id(), fixture_l1().log_id());
        assert_eq!(n.pseudonyms.pseudonym("alice"), Some("r1"));
        assert_eq!(n.pseudonyms.pseudonym("bob"), Some("r2"));
        assert_eq!(n.pseudonyms.pseudonym("carol"), Some("r3"));
        assert!(n.log.canonical_csv().lines().all(|l| !l.contains("alice")));
    }

    #[test]
    fn empty_log_is_an_error() {
        assert_eq!(EventLog::from_events(vec![], LogMetadata::default()).unwrap_err(), LogError::Empty);
    }

    #[test]
    fn canonical_csv_layout() {
        let csv = fixture_l1().canonical_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("case_id,activity,timestamp,resource"));
        assert_eq!(lines.next(), Some("c1,A,2024-01-01T00:00:00Z,r1"));
        assert_eq!(csv.lines().count(), 10);
    }

    #[test]
    fn filter_by_activity() {
        let log = fixture_l1();
        let criteria = FilterCriteria {
            activities: Some(["A", "C"].into_iter().map(String::from).collect()),
            ..Default::default()
        };
        let filtered = filter_log(&log, &criteria).unwrap();
        assert_eq!(filtered.num_events(), 6);
        assert_eq!(filtered.num_cases(), 3);
        assert_ne!(filtered.log_id(), log.log_id());
    }

    #[test]
    fn filter_identity_and_case_set() {
        let log = fixture_l1();
        let same = filter_log(&log, &FilterCriteria::default()).unwrap();
        assert_eq!(same, log);
        let c2 = filter_log(
            &log,
            &FilterCriteria { case_ids: Some(["c2".to_string()].into()), ..Default::default() },
        )
        .unwrap();
        assert_eq!((c2.num_cases(), c2.num_events()), (1, 4));
    }

    #[test]
    fn filter_errors() {
        let log = fixture_l1();
        let t = Timestamp::from_millis(0);
        let later = Timestamp::from_millis(1);
        assert!(matches!(
            filter_log(&log, &FilterCriteria { date_range: Some((later, t)), ..Default::default() }),
            Err(LogError::InvalidRange { .. })
        ));
        assert_eq!(
            filter_log(&log, &FilterCriteria { date_range: Some((t, later)), ..Default::default() }),
            Err(LogError::Empty)
        );
    }

    #[test]
    fn metadata_placeholders() {
        let m = LogMetadata { sector: " ".into(), ..LogMetadata::default() }.sanitized();
        assert_eq!(m.sector, "unknown");
    }
}
