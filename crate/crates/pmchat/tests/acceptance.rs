//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod oracle;
mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{g1_metadata, harness, harness_with, ingest_l1, l1_csv};
use pmchat::app::AppConfig;
use pmchat::gateway::{
    CompletionOutcome, CompletionRequest, Gateway, MockFailure, MockTransport, RecordingSleeper, RecordingTransport,
    RetryPolicy,
};
use pmchat::ingest::ColumnMapping;
use pmchat::session::{Response, SYSTEM_PROMPT};
use pmchat_core::chat::{ChatMessage, Role};
use pmchat_core::conformance::check_conformance;
use pmchat_core::discovery::{build_dfg, discover_model, Thresholds};
use pmchat_core::evaluation::{GroupBy, RatingFilter};
use pmchat_core::log::{fixture_l1, fixture_l1_events, Event};
use pmchat_core::prompt::{section_headers, AnalysisTask, PromptStyle, OPTIMIZED_SECTIONS, ZERO_SHOT_SECTIONS};
use pmchat_core::redact::DenyIndex;
use pmchat_core::{LogId, LogMetadata, Module, Timestamp};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const RANDOM_LOGS: u64 = 200;

fn kpi_correctness() -> Outcome {
    let started = Instant::now();
    oracle::check_against_oracle(&fixture_l1_events()).map_err(|e| format!("L1: {e}"))?;
    for seed in 0..RANDOM_LOGS {
        oracle::check_against_oracle(&oracle::random_events(seed)).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.2?}, limit 10s"))?;
    Ok(format!("L1 + {RANDOM_LOGS} random logs match the oracle exactly in {elapsed:.2?}"))
}

fn dfg_identity() -> Outcome {
    for seed in 0..RANDOM_LOGS {
        let log = oracle::build(oracle::random_events(seed));
        let total: u64 = build_dfg(&log).edges.values().sum();
        let want = (log.num_events() - log.num_cases()) as u64;
        ensure(total == want, || format!("seed {seed}: edges {total}, events - cases {want}"))?;
    }
    Ok(format!("sum of edge frequencies = events - cases on {RANDOM_LOGS} logs"))
}

fn self_conformance() -> Outcome {
    let thresholds = Thresholds::new(0.0, 1).unwrap();
    for seed in 0..RANDOM_LOGS {
        let log = oracle::build(oracle::random_events(seed));
        let fitness = check_conformance(&discover_model(&log, thresholds).model, &log).log_fitness;
        ensure(fitness == 1.0, || format!("seed {seed}: self fitness {fitness}"))?;
    }
    let t0 = Timestamp::from_millis(oracle::BASE_MILLIS);
    for trial in 0..100u64 {
        let events = oracle::random_events(10_000 + trial);
        let log = oracle::build(events.clone());
        let model = discover_model(&log, thresholds).model;
        let before = check_conformance(&model, &log).log_fitness;
        let pair = model
            .activities
            .iter()
            .flat_map(|a| model.activities.iter().map(move |b| (a.clone(), b.clone())))
            .find(|(a, b)| !model.allows_edge(a, b))
            .unwrap_or_else(|| ("A".into(), "unmodelled".into()));
        let mut injected = events;
        injected.push(Event::new("zz-injected", pair.0, t0));
        injected.push(Event::new("zz-injected", pair.1, t0.add_minutes(1)));
        let after = check_conformance(&model, &oracle::build(injected)).log_fitness;
        ensure(after < before, || format!("trial {trial}: fitness {before} -> {after}"))?;
    }
    Ok(format!("self fitness 1.0 on {RANDOM_LOGS} logs; 100/100 injections lower fitness"))
}

fn hand_replay() -> Outcome {
    let model = discover_model(&fixture_l1(), Thresholds::new(0.0, 1).unwrap()).model;
    let t = Timestamp::from_millis(oracle::BASE_MILLIS);
    let mut events = fixture_l1_events();
    for (i, a) in ["A", "C", "B"].into_iter().enumerate() {
        events.push(Event::new("c4", a, t.add_minutes(i as i64)).with_resource("r1"));
    }
    let report = check_conformance(&model, &oracle::build(events));
    let target = 17.0 / 19.0;
    let got = format!("{}/{} = {:.6}", report.allowed_moves, report.total_moves, report.log_fitness);
    ensure((report.log_fitness - target).abs() < 1e-12, || {
        format!("expected 17/19 = {target:.6}, replay gives {got} (one move per event plus the end move)")
    })?;
    Ok(got)
}

fn prompt_structure() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path());
    let id = ingest_l1(&h.app);
    for m in Module::ALL {
        h.app.analyze(&id, m).unwrap();
    }
    let mut checked = 0;
    for m in Module::ALL {
        for task in AnalysisTask::ALL {
            for (style, want) in [(PromptStyle::ZeroShot, &ZERO_SHOT_SECTIONS[..]), (PromptStyle::Optimized, &OPTIMIZED_SECTIONS[..])] {
                let p = h.app.build_prompt(&id, m, style, task).map_err(|e| e.to_string())?;
                let headers = section_headers(&p.text);
                ensure(headers == want, || format!("{m} {style} {task:?}: headers {headers:?}"))?;
                checked += 1;
            }
        }
    }
    let g1 = h.app.build_prompt(&id, Module::Dashboard, PromptStyle::Optimized, AnalysisTask::Analytics).unwrap();
    let golden = std::fs::read(common::fixture("prompts/g1.txt")).unwrap();
    ensure(g1.text.as_bytes() == golden, || "G1 differs from fixtures/prompts/g1.txt".into())?;
    Ok(format!("{checked} prompts: zero-shot 12 headers, optimized 9, in order; G1 byte-identical"))
}

/// L1 plus random logs with an attribute column, as CSV.
fn redaction_corpus() -> Vec<Vec<u8>> {
    let mut out = vec![l1_csv()];
    for seed in 0..4 {
        let mut csv = String::from("case_id,activity,timestamp,resource,claim_ref\n");
        for (i, e) in oracle::random_events(500 + seed).iter().enumerate() {
            let resource = e.resource.as_deref().unwrap_or("");
            csv.push_str(&format!("{},{},{},{resource},ref-{}q{}\n", e.case_id, e.activity, e.timestamp.to_iso(), seed, i % 7));
        }
        out.push(csv.into_bytes());
    }
    out
}

/// Runs every module, task and style plus follow-ups; returns recorded bodies
/// and the union of deny entries.
fn full_flow(dir: &Path, csv: &[u8]) -> Result<(Vec<String>, Vec<String>), String> {
    let h = harness(dir);
    let summary = h.app.ingest(csv, &ColumnMapping::default(), g1_metadata()).map_err(|e| e.to_string())?;
    let id = summary.log_id;
    for m in Module::ALL {
        h.app.analyze(&id, m).map_err(|e| e.to_string())?;
    }
    for style in [PromptStyle::ZeroShot, PromptStyle::Optimized] {
        let s = h.app.create_session(&id, style).map_err(|e| e.to_string())?;
        for m in Module::ALL {
            for task in AnalysisTask::ALL {
                h.app.run_analysis(&s.session_id, m, task).map_err(|e| e.to_string())?;
            }
            h.app.follow_up(&s.session_id, "Which figure matters most here?").map_err(|e| e.to_string())?;
        }
    }
    let deny = h.app.store().load_deny_index(&LogId::parse(&id).unwrap()).map_err(|e| e.to_string())?;
    Ok((h.recorder.bodies(), deny.entries().to_vec()))
}

fn redaction() -> Outcome {
    let mut bodies = 0;
    let mut entries = 0;
    for csv in redaction_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let (recorded, deny_entries) = full_flow(dir.path(), &csv)?;
        ensure(!deny_entries.is_empty(), || "empty deny index".into())?;
        let deny = DenyIndex::new(deny_entries.iter().map(String::as_str), []);
        for body in &recorded {
            let hits: BTreeSet<&str> = deny.matches_in(body);
            ensure(hits.is_empty(), || format!("{} deny entries found in an outbound body", hits.len()))?;
        }
        bodies += recorded.len();
        entries += deny_entries.len();
    }
    Ok(format!("0 matches over {bodies} outbound bodies ({entries} deny entries)"))
}

fn not_available() -> Outcome {
    let policy = RetryPolicy::default();
    let recorder = Arc::new(RecordingTransport::new(Arc::new(MockTransport::always_failing(MockFailure::Timeout))));
    let sleeper = Arc::new(RecordingSleeper::default());
    let gateway = Gateway::with_options(recorder.clone(), sleeper.clone(), 1);
    let req = CompletionRequest::new("mock", vec![ChatMessage::system("s"), ChatMessage::user("Role: r\n\nTask: t\n")]);
    let outcome = gateway.complete_with_retry(&req, &policy, &DenyIndex::default()).map_err(|e| e.to_string())?;
    let attempts = match outcome {
        CompletionOutcome::NotAvailable { attempts, .. } => attempts,
        other => return Err(format!("expected NotAvailable, got {other:?}")),
    };
    ensure(attempts == policy.max_attempts && recorder.calls() == 3, || {
        format!("attempts {attempts}, provider calls {}", recorder.calls())
    })?;

    let dir = tempfile::tempdir().unwrap();
    let up = harness(dir.path());
    let id = ingest_l1(&up.app);
    up.app.analyze(&id, Module::Dashboard).unwrap();
    let sid = up.app.create_session(&id, PromptStyle::Optimized).unwrap().session_id;
    up.app.run_analysis(&sid, Module::Dashboard, AnalysisTask::Analytics).unwrap();
    let before = up.app.session(&sid).unwrap().history;

    let down = harness_with(dir.path(), Arc::new(MockTransport::always_failing(MockFailure::Server)), AppConfig::default());
    let result = down.app.run_analysis(&sid, Module::Dashboard, AnalysisTask::Interpretation).map_err(|e| e.to_string())?;
    ensure(matches!(result.response, Response::NotAvailable { attempts: 3, .. }), || format!("{:?}", result.response))?;
    ensure(down.recorder.calls() == 3, || format!("{} provider calls", down.recorder.calls()))?;
    let after = down.app.session(&sid).unwrap().history;
    ensure(after.len() == before.len() + 1 && after[..before.len()] == before[..], || "history was altered".into())?;
    ensure(after.last().map(|m| m.role) == Some(Role::User), || "NA turn not recorded".into())?;
    let stored = down.app.analysis_results(&sid).unwrap();
    ensure(stored.last().is_some_and(|r| r.response.is_not_available()), || "NA result not stored".into())?;
    Ok(format!("NotAvailable after exactly {} calls; session kept {} prior turns", policy.max_attempts, before.len()))
}

fn evaluation_arithmetic() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path());
    let raw = std::fs::read(common::fixture("ratings/reconstruction.csv")).unwrap();
    h.app.import_ratings_csv(&raw).map_err(|e| e.to_string())?;
    let goods = |group_by: GroupBy| -> Vec<(String, [u32; 4])> {
        let report = h.app.rating_distribution(&RatingFilter::default(), group_by).unwrap();
        report
            .groups
            .iter()
            .map(|g| (g.label.clone(), [g.percentages.good, g.percentages.mediocre, g.percentages.bad, g.percentages.na]))
            .collect()
    };
    let overall = goods(GroupBy::Overall);
    ensure(overall[0].1 == [72, 19, 8, 1], || format!("overall {overall:?}"))?;
    let sector: Vec<(String, u32)> = goods(GroupBy::Sector).into_iter().map(|(l, p)| (l, p[0])).collect();
    let want = [("Industrial", 77), ("Public", 67), ("Service", 71)];
    ensure(sector.iter().map(|(l, g)| (l.as_str(), *g)).eq(want), || format!("sector {sector:?}"))?;
    let gender: Vec<(String, u32)> = goods(GroupBy::Gender).into_iter().map(|(l, p)| (l, p[0])).collect();
    ensure(gender.iter().map(|(l, g)| (l.as_str(), *g)).eq([("female", 70), ("male", 74)]), || format!("gender {gender:?}"))?;
    Ok("overall 72/19/8/1; Good by sector 67/71/77; Good by gender 74/70".into())
}

/// Stored prompts and responses of one full run, serialized.
fn e2e_run(dir: &Path) -> Result<String, String> {
    let h = harness(dir);
    let summary = h.app.ingest(&l1_csv(), &ColumnMapping::default(), LogMetadata::default()).map_err(|e| e.to_string())?;
    for m in Module::ALL {
        h.app.analyze(&summary.log_id, m).map_err(|e| e.to_string())?;
    }
    let sid = h.app.create_session(&summary.log_id, PromptStyle::Optimized).map_err(|e| e.to_string())?.session_id;
    for m in Module::ALL {
        h.app.run_analysis(&sid, m, AnalysisTask::Analytics).map_err(|e| e.to_string())?;
    }
    h.app.follow_up(&sid, "Summarize the main risk.").map_err(|e| e.to_string())?;
    let session = h.app.session(&sid).map_err(|e| e.to_string())?;
    let results = h.app.analysis_results(&sid).map_err(|e| e.to_string())?;
    if session.history.first().map(|m| m.content.as_str()) != Some(SYSTEM_PROMPT) || session.history.len() != 13 {
        return Err(format!("unexpected history of {} messages", session.history.len()));
    }
    let stored: Vec<(&str, &Response)> = results.iter().map(|r| (r.prompt_text.as_str(), &r.response)).collect();
    Ok(serde_json::to_string(&(stored, &session.history)).unwrap())
}

fn e2e_determinism() -> Outcome {
    let started = Instant::now();
    let a = e2e_run(tempfile::tempdir().unwrap().path())?;
    let b = e2e_run(tempfile::tempdir().unwrap().path())?;
    let elapsed = started.elapsed();
    ensure(a == b, || "two clean runs stored different prompts or responses".into())?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.2?}, limit 30s"))?;
    Ok(format!("two clean runs byte-identical ({} bytes) in {elapsed:.2?}", a.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("structural/temporal KPI correctness", kpi_correctness),
        ("DFG identity", dfg_identity),
        ("self-conformance and injection", self_conformance),
        ("hand-replay case 17/19", hand_replay),
        ("prompt structure and G1", prompt_structure),
        ("redaction", redaction),
        ("N.A. semantics", not_available),
        ("evaluation arithmetic", evaluation_arithmetic),
        ("end-to-end determinism", e2e_determinism),
    ];
    let mut failed = 0;
    println!("acceptance criteria");
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!(
        "N/A   expert-quality claims: rating live-model answers and comparing prompt styles need human judges \
         and a hosted model; covered offline by the criteria above"
    );
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
