//! Conversational process mining: ingestion, module analysis, prompt
//! assembly, LLM sessions, ratings and the HTTP/CLI front ends.
//!
//! The pure computation lives in `pmchat-core`; this crate adds storage,
//! networking and the command line.

pub mod app;
pub mod cli;
pub mod clock;
pub mod config;
pub mod error;
pub mod gateway;
pub mod http;
pub mod ingest;
pub mod ratings;
pub mod session;
pub mod store;

pub use app::{App, AppConfig};
pub use error::{Error, Result};
