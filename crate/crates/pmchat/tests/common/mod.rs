#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use pmchat::app::{App, AppConfig};
use pmchat::clock::SteppingClock;
use pmchat::gateway::{Gateway, MockTransport, RecordingSleeper, RecordingTransport, Transport};
use pmchat::ingest::ColumnMapping;
use pmchat::store::Store;
use pmchat_core::{LogMetadata, Timestamp};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn l1_csv() -> Vec<u8> {
    std::fs::read(fixture("logs/l1.csv")).unwrap()
}

/// Metadata used for the golden prompt.
pub fn g1_metadata() -> LogMetadata {
    LogMetadata {
        sector: "Public administration".into(),
        economic_activity: "General public administration".into(),
        process_name: "Permit handling".into(),
        organization: "Municipality of Example".into(),
    }
}

pub struct Harness {
    pub app: Arc<App>,
    pub recorder: Arc<RecordingTransport>,
    pub sleeper: Arc<RecordingSleeper>,
}

pub fn harness_with(dir: &Path, inner: Arc<dyn Transport>, config: AppConfig) -> Harness {
    let recorder = Arc::new(RecordingTransport::new(inner));
    let sleeper = Arc::new(RecordingSleeper::default());
    let gateway = Gateway::with_options(recorder.clone(), sleeper.clone(), 4);
    let clock = Arc::new(SteppingClock::new(Timestamp::from_millis(1_735_689_600_000)));
    let app = App::new(Store::open(dir).unwrap(), gateway, clock, config);
    Harness { app: Arc::new(app), recorder, sleeper }
}

pub fn harness(dir: &Path) -> Harness {
    harness_with(dir, Arc::new(MockTransport::new()), AppConfig::default())
}

/// Ingests L1 with the golden metadata and returns its log id.
pub fn ingest_l1(app: &App) -> String {
    app.ingest(&l1_csv(), &ColumnMapping::default(), g1_metadata()).unwrap().log_id
}

/// Raw identifiers of L1 that must never leave the process.
pub const L1_RAW: [&str; 6] = ["c1", "c2", "c3", "alice", "bob", "carol"];
