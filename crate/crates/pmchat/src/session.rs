//! Analysis sessions: prompt assembly, the conversation history, and the
//! NotAvailable contract.
//!
//! History starts with one system message, added on the first analysis.
//! A successful turn appends `user` then `assistant`; a NotAvailable turn
//! appends only the `user` message, so the next turn may follow a user
//! message directly. Turns are only ever appended.

use std::collections::BTreeMap;

use pmchat_core::chat::{ChatMessage, Role};
use pmchat_core::evaluation::{Category, RatingRecord};
use pmchat_core::prompt::{assemble_prompt, default_fields_for, estimate_tokens, AnalysisTask, PromptStyle, RenderBudget};
use pmchat_core::{LogId, Module, Timestamp};
use serde::{Deserialize, Serialize};

use crate::app::App;
use crate::error::{Error, Result};
use crate::gateway::{CompletionOutcome, CompletionRequest, FinishReason, Rejected};

pub const SYSTEM_PROMPT: &str = "You are an assistant for business process analysis. You receive aggregated \
outputs of process mining modules (KPIs, discovered flows, performance, conformance and organizational \
figures). Raw event data is never shared with you; resources appear only as pseudonyms.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub log_id: LogId,
    pub prompt_style: PromptStyle,
    pub history: Vec<ChatMessage>,
    pub created_at: Timestamp,
    /// Number of analyses run, including NotAvailable ones.
    pub analyses: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Response {
    Answered { content: String, finish_reason: FinishReason },
    NotAvailable { attempts: u32, reason: String },
}

impl Response {
    pub fn content(&self) -> Option<&str> {
        match self {
            Response::Answered { content, .. } => Some(content),
            Response::NotAvailable { .. } => None,
        }
    }

    pub fn is_not_available(&self) -> bool {
        matches!(self, Response::NotAvailable { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub session_id: String,
    pub sequence: u32,
    pub module: Module,
    pub task: AnalysisTask,
    pub prompt_style: PromptStyle,
    /// Exactly the user message that was sent.
    pub prompt_text: String,
    pub response: Response,
    pub attempts: u32,
    pub latency_ms: u64,
    /// Stored output version and budget the prompt was built from.
    pub output_version: u32,
    pub prompt_budget_tokens: usize,
    pub created_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FollowUp {
    pub session_id: String,
    pub response: Response,
    pub attempts: u32,
    pub history_len: usize,
}

/// A built prompt and the stored output version it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub text: String,
    pub output_version: u32,
}

/// Drops the oldest non-system turns two at a time until the estimated size
/// fits `budget_tokens`. The system message and the newest message are kept
/// even if they alone exceed the budget.
pub fn fit_history(messages: &[ChatMessage], budget_tokens: usize) -> Vec<ChatMessage> {
    let mut out: Vec<ChatMessage> = messages.to_vec();
    let size = |m: &[ChatMessage]| m.iter().map(|m| estimate_tokens(&m.content)).sum::<usize>();
    while size(&out) > budget_tokens {
        let first = usize::from(out.first().is_some_and(|m| m.role == Role::System));
        let removable = out.len().saturating_sub(first + 1);
        if removable == 0 {
            break;
        }
        out.drain(first..first + removable.min(2));
    }
    out
}

struct Exchange {
    response: Response,
    attempts: u32,
    latency_ms: u64,
}

impl App {
    pub fn create_session(&self, log_id: &str, style: PromptStyle) -> Result<Session> {
        let id = self.store.log_id(log_id)?;
        if !self.store.output_index(&id)?.contains_key(&Module::Dashboard) {
            return Err(Error::Precondition(format!(
                "dashboard output missing for log {id}; run analyze with module dashboard first"
            )));
        }
        let session = Session {
            session_id: self.store.allocate_session_id()?,
            log_id: id,
            prompt_style: style,
            history: Vec::new(),
            created_at: self.clock.now(),
            analyses: 0,
        };
        self.store.save_session(&session)?;
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Result<Session> {
        self.store.load_session(session_id)
    }

    pub fn analysis_results(&self, session_id: &str) -> Result<Vec<AnalysisResult>> {
        self.store.load_results(session_id)
    }

    /// Builds the prompt for one module from its latest stored output.
    pub fn build_prompt(&self, log_id: &str, module: Module, style: PromptStyle, task: AnalysisTask) -> Result<BuiltPrompt> {
        let id = self.store.log_id(log_id)?;
        let Some((entry, record)) = self.store.latest_outputs(&id, Some(&[module]))?.remove(&module) else {
            return Err(Error::Precondition(format!(
                "{module} output missing for log {id}; run analyze with module {module} first"
            )));
        };
        let text = self.render_prompt(&id, record, style, task, self.config.prompt_budget)?;
        Ok(BuiltPrompt { text, output_version: entry.version })
    }

    fn render_prompt(
        &self,
        id: &LogId,
        record: pmchat_core::payload::ModuleOutputRecord,
        style: PromptStyle,
        task: AnalysisTask,
        budget: RenderBudget,
    ) -> Result<String> {
        let metadata = self.store.load_metadata(id)?;
        let module = record.module;
        let fields = default_fields_for(&metadata, module, task).for_style(style);
        let outputs = BTreeMap::from([(module, record)]);
        Ok(assemble_prompt(&fields, task, &outputs, budget)?)
    }

    /// Rebuilds the prompt of a stored analysis from the inputs it recorded.
    pub fn replay_prompt(&self, session_id: &str, sequence: u32) -> Result<String> {
        let session = self.store.load_session(session_id)?;
        let result = self
            .store
            .load_results(session_id)?
            .into_iter()
            .find(|r| r.sequence == sequence)
            .ok_or_else(|| Error::not_found("analysis result", format!("{session_id}/{sequence}")))?;
        let record = self.store.load_output_version(&session.log_id, result.module, result.output_version)?;
        let budget = RenderBudget::new(result.prompt_budget_tokens)?;
        self.render_prompt(&session.log_id, record, result.prompt_style, result.task, budget)
    }

    fn exchange(&self, session: &Session, messages: Vec<ChatMessage>) -> Result<Exchange> {
        let deny = self.store.load_deny_index(&session.log_id)?;
        let window = fit_history(&messages, self.config.history_budget_tokens);
        let request = CompletionRequest::new(self.config.model_name.clone(), window);
        match self.gateway.complete_with_retry(&request, &self.config.retry, &deny) {
            Ok(CompletionOutcome::Completed { result, attempts }) => Ok(Exchange {
                response: Response::Answered { content: result.content, finish_reason: result.finish_reason },
                attempts,
                latency_ms: result.latency_ms,
            }),
            Ok(CompletionOutcome::NotAvailable { attempts, last_error }) => Ok(Exchange {
                response: Response::NotAvailable { attempts, reason: last_error.to_string() },
                attempts,
                latency_ms: 0,
            }),
            Err(Rejected::Redaction(report)) => Err(Error::Redaction(report)),
            Err(Rejected::Invalid(e)) => Err(Error::Invalid(e.to_string())),
        }
    }

    /// Builds the module prompt for the session's style, sends it with the
    /// conversation so far, and records the result.
    pub fn run_analysis(&self, session_id: &str, module: Module, task: AnalysisTask) -> Result<AnalysisResult> {
        let lock = self.session_lock(session_id);
        let _serial = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut session = self.store.load_session(session_id)?;
        let prompt = self.build_prompt(session.log_id.as_str(), module, session.prompt_style, task)?;

        let mut history = session.history.clone();
        if history.is_empty() {
            history.push(ChatMessage::system(SYSTEM_PROMPT));
        }
        history.push(ChatMessage::user(prompt.text.clone()));
        let exchange = self.exchange(&session, history.clone())?;
        if let Some(content) = exchange.response.content() {
            history.push(ChatMessage::assistant(content));
        }

        session.analyses += 1;
        let result = AnalysisResult {
            session_id: session.session_id.clone(),
            sequence: session.analyses,
            module,
            task,
            prompt_style: session.prompt_style,
            prompt_text: prompt.text,
            response: exchange.response,
            attempts: exchange.attempts,
            latency_ms: exchange.latency_ms,
            output_version: prompt.output_version,
            prompt_budget_tokens: self.config.prompt_budget.max_prompt_tokens,
            created_at: self.clock.now(),
        };
        self.store.save_result(&result)?;
        session.history = history;
        self.store.save_session(&session)?;

        if self.config.auto_rate_na && result.response.is_not_available() {
            let metadata = self.store.load_metadata(&session.log_id)?;
            self.store.append_ratings(vec![RatingRecord {
                rating_id: String::new(),
                subject: format!("{}/{}", result.session_id, result.sequence),
                module,
                prompt_style: session.prompt_style,
                category: Category::NotAvailable,
                sector: metadata.sector,
                expert_gender: None,
                expert_experience_years: None,
            }])?;
        }
        Ok(result)
    }

    /// Sends a free-text question with the conversation so far.
    pub fn follow_up(&self, session_id: &str, text: &str) -> Result<FollowUp> {
        let lock = self.session_lock(session_id);
        let _serial = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut session = self.store.load_session(session_id)?;
        if session.analyses == 0 {
            return Err(Error::Precondition(format!(
                "session {session_id} has no analysis yet; run an analysis before asking follow-up questions"
            )));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Invalid("message text is empty".into()));
        }
        let mut history = session.history.clone();
        history.push(ChatMessage::user(text));
        let exchange = self.exchange(&session, history.clone())?;
        if let Some(content) = exchange.response.content() {
            history.push(ChatMessage::assistant(content));
        }
        session.history = history;
        self.store.save_session(&session)?;
        Ok(FollowUp {
            session_id: session.session_id,
            response: exchange.response,
            attempts: exchange.attempts,
            history_len: session.history.len(),
        })
    }
}
