//! Performance mining: case flow times, inter-event waiting times per
//! directly-follows edge, bottleneck ranking and completion throughput.
//!
//! Events carry a single timestamp, so the elapsed time between consecutive
//! events is reported as waiting time; service time needs lifecycle
//! transitions, which are not ingested. Samples are kept in milliseconds and
//! statistics are stored as whole seconds (floored).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::discovery::Edge;
use crate::log::{Case, EventLog};
use crate::pairmap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: u64,
    pub min_secs: u64,
    pub max_secs: u64,
    pub mean_secs: u64,
    /// Even-sized samples use the mean of the two middle values.
    pub median_secs: u64,
}

impl DurationStats {
    /// `None` for an empty sample. Negative samples are clamped to zero.
    pub fn from_millis(samples: &[i64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted: Vec<u64> = samples.iter().map(|&ms| ms.max(0) as u64).collect();
        sorted.sort_unstable();
        let n = sorted.len();
        let sum: u128 = sorted.iter().map(|&v| v as u128).sum();
        let median_ms = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            ((sorted[n / 2 - 1] as u128 + sorted[n / 2] as u128) / 2) as u64
        };
        Some(DurationStats {
            count: n as u64,
            min_secs: sorted[0] / 1000,
            max_secs: sorted[n - 1] / 1000,
            mean_secs: (sum / n as u128 / 1000) as u64,
            median_secs: median_ms / 1000,
        })
    }
}

pub fn case_span_millis(case: &Case) -> i64 {
    case.last().timestamp.as_millis() - case.first().timestamp.as_millis()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDurations {
    pub per_case_secs: BTreeMap<String, u64>,
    pub stats: DurationStats,
}

pub fn case_durations(log: &EventLog) -> CaseDurations {
    let spans: Vec<i64> = log.cases().map(case_span_millis).collect();
    CaseDurations {
        per_case_secs: log
            .cases()
            .zip(&spans)
            .map(|(c, &ms)| (c.case_id().into(), ms.max(0) as u64 / 1000))
            .collect(),
        stats: DurationStats::from_millis(&spans).expect("normalized logs have at least one case"),
    }
}

/// One waiting-time sample (ms) per consecutive event pair, grouped by edge.
pub fn edge_waiting_samples(log: &EventLog) -> BTreeMap<Edge, Vec<i64>> {
    let mut samples: BTreeMap<Edge, Vec<i64>> = BTreeMap::new();
    for case in log.cases() {
        for pair in case.events().windows(2) {
            samples
                .entry((pair[0].activity.clone(), pair[1].activity.clone()))
                .or_default()
                .push(pair[1].timestamp.as_millis() - pair[0].timestamp.as_millis());
        }
    }
    samples
}

pub fn edge_waiting_stats(log: &EventLog) -> BTreeMap<Edge, DurationStats> {
    edge_waiting_samples(log)
        .into_iter()
        .map(|(edge, s)| (edge, DurationStats::from_millis(&s).expect("non-empty by construction")))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bottleneck {
    pub from: String,
    pub to: String,
    pub mean_waiting_secs: u64,
    pub frequency: u64,
}

/// Edges seen at least `min_frequency` times, slowest mean first; ties go to
/// the more frequent edge, then to the lexicographically smaller edge.
pub fn identify_bottlenecks(
    edge_stats: &BTreeMap<Edge, DurationStats>,
    top_k: usize,
    min_frequency: u64,
) -> Vec<Bottleneck> {
    let mut ranked: Vec<Bottleneck> = edge_stats
        .iter()
        .filter(|(_, s)| s.count >= min_frequency)
        .map(|((from, to), s)| Bottleneck {
            from: from.clone(),
            to: to.clone(),
            mean_waiting_secs: s.mean_secs,
            frequency: s.count,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.mean_waiting_secs
            .cmp(&a.mean_waiting_secs)
            .then_with(|| b.frequency.cmp(&a.frequency))
            .then_with(|| (&a.from, &a.to).cmp(&(&b.from, &b.to)))
    });
    ranked.truncate(top_k);
    ranked
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Day,
    /// ISO weeks, starting Monday.
    Week,
    Month,
}

impl Bucket {
    pub fn start_of(self, date: NaiveDate) -> NaiveDate {
        match self {
            Bucket::Day => date,
            Bucket::Week => date - Days::new(date.weekday().num_days_from_monday() as u64),
            Bucket::Month => date.with_day(1).expect("day 1 exists"),
        }
    }

    fn next(self, start: NaiveDate) -> NaiveDate {
        match self {
            Bucket::Day => start + Days::new(1),
            Bucket::Week => start + Days::new(7),
            Bucket::Month => {
                let (y, m) = if start.month() == 12 { (start.year() + 1, 1) } else { (start.year(), start.month() + 1) };
                NaiveDate::from_ymd_opt(y, m, 1).expect("first of month exists")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputPoint {
    pub bucket_start: NaiveDate,
    pub completed_cases: u64,
}

/// Completed cases per bucket, counted in the bucket holding each case's
/// last event. The series is dense between the first and last bucket.
pub fn throughput(log: &EventLog, bucket: Bucket) -> Vec<ThroughputPoint> {
    let mut counts: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for case in log.cases() {
        *counts.entry(bucket.start_of(case.last().timestamp.date())).or_default() += 1;
    }
    let (Some(&first), Some(&last)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Vec::new();
    };
    let mut series = Vec::new();
    let mut cursor = first;
    while cursor <= last {
        series.push(ThroughputPoint { bucket_start: cursor, completed_cases: counts.get(&cursor).copied().unwrap_or(0) });
        cursor = bucket.next(cursor);
    }
    series
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub case_duration: DurationStats,
    pub per_case_durations: BTreeMap<String, u64>,
    #[serde(with = "pairmap")]
    pub edge_waiting: BTreeMap<Edge, DurationStats>,
    pub bottlenecks: Vec<Bottleneck>,
    pub daily_throughput: Vec<ThroughputPoint>,
}

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MIN_FREQUENCY: u64 = 1;

pub fn performance_report(log: &EventLog, top_k: usize, min_frequency: u64) -> PerformanceReport {
    let durations = case_durations(log);
    let edge_waiting = edge_waiting_stats(log);
    PerformanceReport {
        case_duration: durations.stats,
        per_case_durations: durations.per_case_secs,
        bottlenecks: identify_bottlenecks(&edge_waiting, top_k, min_frequency),
        edge_waiting,
        daily_throughput: throughput(log, Bucket::Day),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::{fixture_l1, Event, LogMetadata};
    use crate::time::Timestamp;
    use alloc::vec;

    fn e(a: &str, b: &str) -> Edge {
        (a.into(), b.into())
    }

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn l1_case_durations() {
        let d = case_durations(&fixture_l1());
        assert_eq!(d.per_case_secs, [("c1".into(), 1200), ("c2".into(), 720), ("c3".into(), 420)].into());
        assert_eq!(
            d.stats,
            DurationStats { count: 3, min_secs: 420, max_secs: 1200, mean_secs: 780, median_secs: 720 }
        );
    }

    #[test]
    fn single_event_case_has_zero_duration() {
        let log = EventLog::from_events(vec![Event::new("k", "A", Timestamp::from_millis(5))], LogMetadata::default())
            .unwrap()
            .log;
        assert_eq!(case_durations(&log).per_case_secs["k"], 0);
    }

    #[test]
    fn constant_distribution() {
        let s = DurationStats::from_millis(&[90_000; 5]).unwrap();
        assert_eq!((s.min_secs, s.max_secs, s.mean_secs, s.median_secs), (90, 90, 90, 90));
    }

    #[test]
    fn even_median_and_floor() {
        let s = DurationStats::from_millis(&[1_000, 2_000, 4_000, 10_500]).unwrap();
        assert_eq!(s.median_secs, 3);
        assert_eq!(s.mean_secs, 4); // 17.5s / 4 = 4.375s
        assert_eq!(s.max_secs, 10);
        assert!(DurationStats::from_millis(&[]).is_none());
    }

    #[test]
    fn l1_edge_waiting() {
        let samples = edge_waiting_samples(&fixture_l1());
        assert_eq!(samples[&e("A", "B")], vec![600_000, 300_000]);
        assert_eq!(samples[&e("B", "B")], vec![180_000]);
        let stats = edge_waiting_stats(&fixture_l1());
        assert_eq!(stats[&e("A", "B")].mean_secs, 450);
        assert_eq!(stats[&e("B", "C")].mean_secs, 420);
        assert_eq!(stats[&e("B", "B")].mean_secs, 180);
    }

    #[test]
    fn equal_timestamps_give_zero_wait() {
        let t = Timestamp::from_millis(0);
        let log = EventLog::from_events(vec![Event::new("k", "A", t), Event::new("k", "B", t)], LogMetadata::default())
            .unwrap()
            .log;
        assert_eq!(edge_waiting_samples(&log)[&e("A", "B")], vec![0]);
    }

    #[test]
    fn l1_bottlenecks() {
        let stats = edge_waiting_stats(&fixture_l1());
        let b = |from: &str, to: &str, mean, frequency| Bottleneck { from: from.into(), to: to.into(), mean_waiting_secs: mean, frequency };
        assert_eq!(identify_bottlenecks(&stats, 1, 1), vec![b("A", "B", 450, 2)]);
        assert_eq!(identify_bottlenecks(&stats, 10, 2), vec![b("A", "B", 450, 2), b("B", "C", 420, 2)]);
        assert_eq!(
            identify_bottlenecks(&stats, 10, 1),
            vec![b("A", "B", 450, 2), b("B", "C", 420, 2), b("A", "C", 420, 1), b("B", "B", 180, 1)]
        );
        assert!(identify_bottlenecks(&stats, 0, 1).is_empty());
        assert!(identify_bottlenecks(&stats, 5, 3).is_empty());
    }

    #[test]
    fn l1_daily_throughput() {
        assert_eq!(
            throughput(&fixture_l1(), Bucket::Day),
            vec![ThroughputPoint { bucket_start: day(2024, 1, 1), completed_cases: 3 }]
        );
    }

    #[test]
    fn dense_buckets() {
        let t = Timestamp::parse("2024-01-30T12:00:00Z").unwrap();
        let later = Timestamp::parse("2024-03-02T12:00:00Z").unwrap();
        let log = EventLog::from_events(
            vec![Event::new("a", "X", t), Event::new("b", "X", t), Event::new("c", "X", later)],
            LogMetadata::default(),
        )
        .unwrap()
        .log;
        let daily = throughput(&log, Bucket::Day);
        assert_eq!(daily.len(), 33);
        assert_eq!(daily.iter().map(|p| p.completed_cases).sum::<u64>(), 3);
        assert_eq!(daily[1].completed_cases, 0);
        let monthly = throughput(&log, Bucket::Month);
        assert_eq!(
            monthly.iter().map(|p| (p.bucket_start, p.completed_cases)).collect::<Vec<_>>(),
            vec![(day(2024, 1, 1), 2), (day(2024, 2, 1), 0), (day(2024, 3, 1), 1)]
        );
        let weekly = throughput(&log, Bucket::Week);
        assert_eq!(weekly[0].bucket_start, day(2024, 1, 29));
        assert_eq!(weekly.last().unwrap().bucket_start, day(2024, 2, 26));
    }

    #[test]
    fn month_rollover() {
        assert_eq!(Bucket::Month.next(day(2023, 12, 1)), day(2024, 1, 1));
    }
}
