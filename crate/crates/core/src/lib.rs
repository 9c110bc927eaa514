//! Process mining engine and prompt assembly for conversational process analytics.
//!
//! Everything in this crate is pure computation over an immutable [`EventLog`]:
//! normalization, the five engine modules (dashboard, discovery, performance,
//! conformance, organizational mining), prompt rendering, redaction matching and
//! rating arithmetic. IO, persistence and transports live in the `pmchat` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

mod csvfmt;
mod pairmap;

pub mod chat;
pub mod conformance;
pub mod discovery;
pub mod evaluation;
pub mod kpi;
pub mod log;
pub mod orgmining;
pub mod payload;
pub mod performance;
pub mod prompt;
pub mod redact;
pub mod time;

pub use crate::kpi::Module;
pub use crate::log::{Case, Event, EventLog, LogError, LogId, LogMetadata};
pub use crate::time::Timestamp;
