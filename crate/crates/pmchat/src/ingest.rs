//! CSV event-log ingestion and the cleaning report.

use std::collections::{BTreeMap, BTreeSet};

use pmchat_core::log::{Normalized, PseudonymTable};
use pmchat_core::redact::DenyIndex;
use pmchat_core::{Event, EventLog, LogError, LogMetadata, Timestamp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};

pub const DEFAULT_RESOURCE_COLUMN: &str = "resource";

/// Which CSV columns hold the case id, activity, timestamp and resource.
/// With no resource column named, a column called `resource` is used when
/// the file has one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
    #[serde(default)]
    pub resource: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            case: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            resource: None,
        }
    }
}

/// Dropped rows by reason. The three counts sum to `input_rows - surviving_events`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_rows: u64,
    pub surviving_events: u64,
    #[serde(rename = "empty-field")]
    pub empty_field: u64,
    #[serde(rename = "bad-timestamp")]
    pub bad_timestamp: u64,
    pub duplicate: u64,
}

impl CleaningReport {
    pub fn dropped(&self) -> u64 {
        self.empty_field + self.bad_timestamp + self.duplicate
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub log: EventLog,
    pub pseudonyms: PseudonymTable,
    pub report: CleaningReport,
    pub row_errors: Vec<RowError>,
    pub deny_index: DenyIndex,
}

/// Parses and normalizes a CSV event log.
///
/// Rows with an empty case id, activity or timestamp are dropped; rows with
/// an unparseable timestamp are collected as row errors and the whole parse
/// fails only when they exceed half of the data rows. Unmapped columns become
/// event attributes, which feed the deny index but are not persisted.
pub fn parse_csv(raw: &[u8], mapping: &ColumnMapping, metadata: LogMetadata) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(raw);
    let headers = reader.headers().map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("mapped column {name:?} not in header row")))
    };
    let case_col = column(&mapping.case)?;
    let activity_col = column(&mapping.activity)?;
    let ts_col = column(&mapping.timestamp)?;
    let resource_col = match mapping.resource.as_deref() {
        Some(name) => Some(column(name)?),
        None => headers.iter().position(|h| h.trim() == DEFAULT_RESOURCE_COLUMN),
    };
    let mapped: BTreeSet<usize> = [Some(case_col), Some(activity_col), Some(ts_col), resource_col].into_iter().flatten().collect();

    let mut report = CleaningReport::default();
    let mut row_errors = Vec::new();
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Schema(format!("malformed CSV: {e}")))?;
        report.input_rows += 1;
        let line = record.position().map_or(report.input_rows + 1, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("").trim();
        let (case_id, activity, ts) = (cell(case_col), cell(activity_col), cell(ts_col));
        if case_id.is_empty() || activity.is_empty() || ts.is_empty() {
            report.empty_field += 1;
            continue;
        }
        let timestamp = match Timestamp::parse(ts) {
            Ok(t) => t,
            Err(e) => {
                report.bad_timestamp += 1;
                row_errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let mut event = Event::new(case_id, activity, timestamp);
        event.resource = resource_col.map(cell).filter(|r| !r.is_empty()).map(String::from);
        event.attributes = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !mapped.contains(i))
            .filter_map(|(i, name)| {
                let v = cell(i);
                (!v.is_empty()).then(|| (name.trim().to_string(), v.to_string()))
            })
            .collect::<BTreeMap<_, _>>();
        events.push(event);
    }

    if report.bad_timestamp * 2 > report.input_rows {
        return Err(Error::Schema(format!(
            "{} of {} rows have an unparseable timestamp in column {:?}",
            report.bad_timestamp, report.input_rows, mapping.timestamp
        )));
    }

    let Normalized { log, pseudonyms, blank_dropped, duplicates_dropped } =
        EventLog::from_events(events, metadata).map_err(|e| match e {
            LogError::Empty => Error::EmptyLog,
            other => Error::Invalid(other.to_string()),
        })?;
    report.empty_field += blank_dropped as u64;
    report.duplicate = duplicates_dropped as u64;
    report.surviving_events = log.num_events() as u64;

    let deny_index = deny_index_for(&log, &pseudonyms);
    Ok(Ingested { log, pseudonyms, report, row_errors, deny_index })
}

/// Case ids, raw resource names and raw attribute values, minus the
/// vocabulary that prompts legitimately carry (activities, pseudonyms,
/// metadata values).
fn deny_index_for(log: &EventLog, pseudonyms: &PseudonymTable) -> DenyIndex {
    let metadata = log.metadata();
    let sensitive = log
        .cases()
        .map(|c| c.case_id())
        .chain(pseudonyms.raw_names())
        .chain(log.events().flat_map(|e| e.attributes.values().map(String::as_str)));
    let allowed = log
        .activities()
        .into_iter()
        .chain(pseudonyms.pseudonyms())
        .chain([
            metadata.sector.as_str(),
            metadata.economic_activity.as_str(),
            metadata.process_name.as_str(),
            metadata.organization.as_str(),
        ]);
    DenyIndex::new(sensitive, allowed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const L1: &str = "case_id,activity,timestamp,resource\n\
        c1,A,2024-01-01T00:00:00Z,alice\n\
        c1,B,2024-01-01T00:10:00Z,alice\n\
        c1,C,2024-01-01T00:20:00Z,bob\n\
        c2,A,2024-01-01T00:00:00Z,alice\n\
        c2,B,2024-01-01T00:05:00Z,bob\n\
        c2,B,2024-01-01T00:08:00Z,bob\n\
        c2,C,2024-01-01T00:12:00Z,carol\n\
        c3,A,2024-01-01T00:00:00Z,alice\n\
        c3,C,2024-01-01T00:07:00Z,bob\n";

    fn parse(text: &str) -> Result<Ingested> {
        parse_csv(text.as_bytes(), &ColumnMapping::default(), LogMetadata::default())
    }

    #[test]
    fn l1_parses() {
        let ing = parse(L1).unwrap();
        assert_eq!((ing.log.num_cases(), ing.log.num_events()), (3, 9));
        assert_eq!(ing.report, CleaningReport { input_rows: 9, surviving_events: 9, ..Default::default() });
        assert_eq!(ing.log, pmchat_core::log::fixture_l1());
        let entries: Vec<&str> = ing.deny_index.entries().iter().map(String::as_str).collect();
        assert_eq!(entries, ["alice", "bob", "c1", "c2", "c3", "carol"]);
    }

    #[test]
    fn duplicate_and_bad_timestamp() {
        let text = format!("{L1}c1,A,2024-01-01T00:00:00Z,alice\nc3,C,yesterday,bob\n");
        let ing = parse(&text).unwrap();
        assert_eq!(ing.log.num_events(), 9);
        assert_eq!((ing.report.duplicate, ing.report.bad_timestamp, ing.report.empty_field), (1, 1, 0));
        assert_eq!(ing.report.dropped(), ing.report.input_rows - ing.report.surviving_events);
        assert_eq!(ing.row_errors, vec![RowError { line: 12, message: "unparseable timestamp \"yesterday\"".into() }]);
    }

    #[test]
    fn empty_fields_dropped() {
        let ing = parse(&format!("{L1}c4,,2024-01-02T00:00:00Z,bob\nc4,A,,bob\n")).unwrap();
        assert_eq!(ing.report.empty_field, 2);
        assert_eq!(ing.log.num_events(), 9);
    }

    #[test]
    fn schema_errors() {
        let mapping = ColumnMapping { case: "case".into(), ..Default::default() };
        let err = parse_csv(L1.as_bytes(), &mapping, LogMetadata::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("\"case\"")), "{err}");
        let err = parse("case_id,activity,timestamp,resource\nc1,A,nope,x\nc1,B,nope,x\nc1,C,2024-01-01 00:00:00,x\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(matches!(parse("case_id,activity,timestamp,resource\n"), Err(Error::EmptyLog)));
    }

    #[test]
    fn attributes_and_optional_resource() {
        let text = "id,task,when,cost\nk1,A,2024-01-01 08:00:00,1250\nk1,B,2024-01-01 09:00:00,\n";
        let mapping = ColumnMapping { case: "id".into(), activity: "task".into(), timestamp: "when".into(), resource: None };
        let ing = parse_csv(text.as_bytes(), &mapping, LogMetadata::default()).unwrap();
        assert!(ing.log.resources().is_empty());
        let entries: Vec<&str> = ing.deny_index.entries().iter().map(String::as_str).collect();
        assert_eq!(entries, ["1250", "k1"]);

        let named = ColumnMapping { resource: Some("who".into()), ..ColumnMapping::default() };
        let err = parse_csv(L1.as_bytes(), &named, LogMetadata::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("\"who\"")), "{err}");
    }

    #[test]
    fn quoted_fields() {
        let text = "case_id,activity,timestamp,resource\n\"c,1\",\"Check \"\"ID\"\"\",2024-01-01T00:00:00+02:00,\"Doe, J.\"\n";
        let ing = parse(text).unwrap();
        let e = ing.log.events().next().unwrap();
        assert_eq!((e.case_id.as_str(), e.activity.as_str()), ("c,1", "Check \"ID\""));
        assert_eq!(e.timestamp.to_iso(), "2023-12-31T22:00:00Z");
        assert_eq!(ing.pseudonyms.raw_names().collect::<Vec<_>>(), ["Doe, J."]);
    }
}
