//! Prompt assembly: the zero-shot (12 sections) and optimized (9 sections)
//! structures, default section texts per module, and budgeted rendering of
//! module KPI data.
//!
//! Every section is written as `Name: content` followed by a blank line; the
//! module data comes last under a `Module Data:` line. Only decoded KPI
//! payloads are rendered, never raw events, and the renderer skips the
//! fields that carry case ids (per-case durations, example cases, violations).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kpi::Module;
use crate::log::LogMetadata;
use crate::payload::{ModuleOutputRecord, ModulePayload, ModelSource, PayloadError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    ZeroShot,
    Optimized,
}

impl PromptStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptStyle::ZeroShot => "zero_shot",
            PromptStyle::Optimized => "optimized",
        }
    }

    pub fn sections(self) -> &'static [&'static str] {
        match self {
            PromptStyle::ZeroShot => &ZERO_SHOT_SECTIONS,
            PromptStyle::Optimized => &OPTIMIZED_SECTIONS,
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "zero_shot" | "zeroshot" => Ok(PromptStyle::ZeroShot),
            "optimized" => Ok(PromptStyle::Optimized),
            other => Err(format!("unknown prompt style {other:?} (expected zero_shot or optimized)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisTask {
    Analytics,
    Interpretation,
    Recommendations,
}

impl AnalysisTask {
    pub const ALL: [AnalysisTask; 3] = [AnalysisTask::Analytics, AnalysisTask::Interpretation, AnalysisTask::Recommendations];

    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisTask::Analytics => "analytics",
            AnalysisTask::Interpretation => "interpretation",
            AnalysisTask::Recommendations => "recommendations",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AnalysisTask::Analytics => "Analytics",
            AnalysisTask::Interpretation => "Interpretations",
            AnalysisTask::Recommendations => "Recommendations for Improvement",
        }
    }

    /// Closing sentence appended to the Task section.
    pub fn directive(self) -> &'static str {
        match self {
            AnalysisTask::Analytics => {
                "Deliver the Analytics: quantify what the module data shows about volume, flow and performance, citing the figures you rely on."
            }
            AnalysisTask::Interpretation => {
                "Deliver the Interpretations: explain what the figures mean for the process, pointing out patterns, anomalies and their likely causes."
            }
            AnalysisTask::Recommendations => {
                "Deliver Recommendations for Improvement: propose specific, prioritized changes to the process that the module data supports."
            }
        }
    }
}

impl FromStr for AnalysisTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytics" => Ok(AnalysisTask::Analytics),
            "interpretation" | "interpretations" => Ok(AnalysisTask::Interpretation),
            "recommendations" => Ok(AnalysisTask::Recommendations),
            other => Err(format!("unknown task {other:?} (expected analytics, interpretation or recommendations)")),
        }
    }
}

pub const ZERO_SHOT_SECTIONS: [&str; 12] = [
    "Role",
    "Task",
    "Process",
    "Organization",
    "Sector",
    "KPIs",
    "Objective",
    "Considerations",
    "Deliverables",
    "Analysis Guidelines",
    "Additional Instructions",
    "Module Data",
];

pub const OPTIMIZED_SECTIONS: [&str; 9] = [
    "Role",
    "Task",
    "Process",
    "Organization",
    "Analysis Focus",
    "Deep Dive",
    "Recommendations",
    "Additional Considerations",
    "Module Data",
];

const MODULE_DATA: &str = "Module Data";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroShotPromptFields {
    pub role: String,
    pub task: String,
    pub process: String,
    pub organization: String,
    pub sector: String,
    pub kpis: String,
    pub objective: String,
    pub considerations: String,
    pub deliverables: String,
    pub analysis_guidelines: String,
    pub additional_instructions: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizedPromptFields {
    pub role: String,
    pub task: String,
    pub process: String,
    pub organization: String,
    pub analysis_focus: String,
    pub deep_dive: String,
    pub recommendations: String,
    pub additional_considerations: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum PromptFields {
    ZeroShot(ZeroShotPromptFields),
    Optimized(OptimizedPromptFields),
}

impl PromptFields {
    pub fn style(&self) -> PromptStyle {
        match self {
            PromptFields::ZeroShot(_) => PromptStyle::ZeroShot,
            PromptFields::Optimized(_) => PromptStyle::Optimized,
        }
    }

    pub fn build(&self, task: AnalysisTask, module_data: &str) -> Result<String, PromptError> {
        match self {
            PromptFields::ZeroShot(f) => build_zero_shot(f, task, module_data),
            PromptFields::Optimized(f) => build_optimized(f, task, module_data),
        }
    }

    /// Clears the next droppable section; `false` once nothing is left to drop.
    fn drop_next(&mut self) -> bool {
        let slots: Vec<&mut String> = match self {
            PromptFields::ZeroShot(f) => alloc::vec![&mut f.additional_instructions, &mut f.considerations],
            PromptFields::Optimized(f) => alloc::vec![&mut f.additional_considerations],
        };
        for slot in slots {
            if !slot.is_empty() {
                slot.clear();
                return true;
            }
        }
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PromptError {
    MissingSections(Vec<&'static str>),
    NoModuleOutputs,
    Payload(PayloadError),
    InvalidBudget,
    /// Even with every truncatable part removed the prompt exceeds the budget.
    BudgetTooSmall { needed_tokens: usize, budget_tokens: usize },
}

impl fmt::Display for PromptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptError::MissingSections(s) => write!(f, "required prompt sections are empty: {}", s.join(", ")),
            PromptError::NoModuleOutputs => f.write_str("no module outputs to analyze"),
            PromptError::Payload(e) => write!(f, "{e}"),
            PromptError::InvalidBudget => f.write_str("prompt budget must be positive"),
            PromptError::BudgetTooSmall { needed_tokens, budget_tokens } => write!(
                f,
                "prompt needs at least {needed_tokens} tokens but the budget is {budget_tokens}"
            ),
        }
    }
}

impl core::error::Error for PromptError {}

impl From<PayloadError> for PromptError {
    fn from(e: PayloadError) -> Self {
        PromptError::Payload(e)
    }
}

/// Token budget for a rendered prompt, estimated as `ceil(chars / 4)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderBudget {
    pub max_prompt_tokens: usize,
}

pub const DEFAULT_MAX_PROMPT_TOKENS: usize = 12_000;

impl Default for RenderBudget {
    fn default() -> Self {
        RenderBudget { max_prompt_tokens: DEFAULT_MAX_PROMPT_TOKENS }
    }
}

impl RenderBudget {
    pub fn new(max_prompt_tokens: usize) -> Result<Self, PromptError> {
        if max_prompt_tokens == 0 {
            return Err(PromptError::InvalidBudget);
        }
        Ok(RenderBudget { max_prompt_tokens })
    }

    pub fn max_chars(self) -> usize {
        self.max_prompt_tokens.saturating_mul(4)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn push_section(out: &mut String, name: &str, content: &str) {
    out.push_str(name);
    out.push(':');
    if !content.is_empty() {
        out.push(' ');
        out.push_str(content);
    }
    out.push_str("\n\n");
}

fn push_module_data(out: &mut String, module_data: &str) {
    out.push_str(MODULE_DATA);
    out.push_str(":\n");
    out.push_str(module_data);
    if !module_data.ends_with('\n') {
        out.push('\n');
    }
}

fn require(pairs: &[(&'static str, &str)]) -> Result<(), PromptError> {
    let missing: Vec<&'static str> = pairs.iter().filter(|(_, v)| v.trim().is_empty()).map(|(n, _)| *n).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(PromptError::MissingSections(missing))
    }
}

fn task_with_directive(task: &str, analysis: AnalysisTask) -> String {
    format!("{} {}", task.trim_end(), analysis.directive())
}

pub fn build_zero_shot(
    fields: &ZeroShotPromptFields,
    task: AnalysisTask,
    module_data: &str,
) -> Result<String, PromptError> {
    require(&[("Role", &fields.role), ("Task", &fields.task)])?;
    let task_text = task_with_directive(&fields.task, task);
    let contents: [&str; 11] = [
        &fields.role,
        &task_text,
        &fields.process,
        &fields.organization,
        &fields.sector,
        &fields.kpis,
        &fields.objective,
        &fields.considerations,
        &fields.deliverables,
        &fields.analysis_guidelines,
        &fields.additional_instructions,
    ];
    let mut out = String::new();
    for (name, content) in ZERO_SHOT_SECTIONS.iter().zip(contents) {
        push_section(&mut out, name, content);
    }
    push_module_data(&mut out, module_data);
    Ok(out)
}

pub fn build_optimized(
    fields: &OptimizedPromptFields,
    task: AnalysisTask,
    module_data: &str,
) -> Result<String, PromptError> {
    require(&[("Role", &fields.role), ("Task", &fields.task)])?;
    let task_text = task_with_directive(&fields.task, task);
    let contents: [&str; 8] = [
        &fields.role,
        &task_text,
        &fields.process,
        &fields.organization,
        &fields.analysis_focus,
        &fields.deep_dive,
        &fields.recommendations,
        &fields.additional_considerations,
    ];
    let mut out = String::new();
    for (name, content) in OPTIMIZED_SECTIONS.iter().zip(contents) {
        push_section(&mut out, name, content);
    }
    push_module_data(&mut out, module_data);
    Ok(out)
}

/// Section headers of a rendered prompt, in order. A header is a known
/// section name followed by `:` at the start of the text or after a blank
/// line; scanning stops at `Module Data`.
pub fn section_headers(prompt: &str) -> Vec<&str> {
    let mut known: Vec<&'static str> = ZERO_SHOT_SECTIONS.iter().chain(OPTIMIZED_SECTIONS.iter()).copied().collect();
    // longest first so "Recommendations" never shadows a longer name
    known.sort_by_key(|n| core::cmp::Reverse(n.len()));
    known.dedup();
    let mut headers = Vec::new();
    for paragraph in prompt.split("\n\n") {
        let Some(name) = known.iter().find(|n| {
            paragraph.strip_prefix(**n).is_some_and(|rest| rest.starts_with(':'))
        }) else {
            continue;
        };
        let start = paragraph.as_ptr() as usize - prompt.as_ptr() as usize;
        headers.push(&prompt[start..start + name.len()]);
        if *name == MODULE_DATA {
            break;
        }
    }
    headers
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefaultFields {
    pub zero_shot: ZeroShotPromptFields,
    pub optimized: OptimizedPromptFields,
}

impl DefaultFields {
    pub fn for_style(&self, style: PromptStyle) -> PromptFields {
        match style {
            PromptStyle::ZeroShot => PromptFields::ZeroShot(self.zero_shot.clone()),
            PromptStyle::Optimized => PromptFields::Optimized(self.optimized.clone()),
        }
    }
}

pub const DEFAULT_ROLE: &str = "Act as a business process analyst and process mining expert.";

struct ModuleWording {
    kpis: &'static str,
    focus: &'static str,
    deep_dive: &'static str,
}

fn wording(module: Module) -> ModuleWording {
    match module {
        Module::Dashboard => ModuleWording {
            kpis: "Structural analysis (total cases, total activities, total variants, total cases with rework) and temporal analysis (first event date, last event date, covered span).",
            focus: "Overall volume, behavioral variety and rework of the process, and the period the data covers.",
            deep_dive: "Relate the number of variants and the rework share to the case volume and explain what they say about standardization.",
        },
        Module::Discovery => ModuleWording {
            kpis: "Activity frequencies, directly-follows relations with their frequencies, start and end activities, and process variants with their case counts.",
            focus: "The dominant path through the process, the main deviations from it, and loops that indicate rework.",
            deep_dive: "Compare the most frequent variants step by step and point out where and how often cases branch or repeat activities.",
        },
        Module::Performance => ModuleWording {
            kpis: "Case duration statistics (count, minimum, maximum, mean, median), waiting time between consecutive activities, ranked bottlenecks, and daily completed-case throughput.",
            focus: "Where time is spent between activities and which transitions slow cases down the most.",
            deep_dive: "Examine the top bottlenecks together with their frequency and judge how much of the total case duration they explain.",
        },
        Module::Conformance => ModuleWording {
            kpis: "Log fitness against the reference model, number of violating cases, and violation counts by kind (unknown activity, disallowed transition, bad start, bad end).",
            focus: "How closely recorded behavior follows the reference model and which kinds of deviation dominate.",
            deep_dive: "Break the deviations down by kind and explain which process rules are most often bypassed.",
        },
        Module::Orgmining => ModuleWording {
            kpis: "Handover-of-work counts between pseudonymized resources, workload per resource, and the resource-activity matrix.",
            focus: "How work moves between resources and how evenly the workload is distributed.",
            deep_dive: "Identify the busiest resources and handover hubs, and the activities that concentrate on few resources.",
        },
    }
}

/// Default section texts for a module and task, filled from the log metadata.
pub fn default_fields_for(metadata: &LogMetadata, module: Module, task: AnalysisTask) -> DefaultFields {
    let w = wording(module);
    let task_text = format!(
        "Review the output of the {} for the process described below and produce the requested {}.",
        module.title(),
        task.label()
    );
    let process = format!(
        "Focus on the \"{}\" process (economic activity: {}).",
        metadata.process_name, metadata.economic_activity
    );
    let organization = format!("The analysis is for {}.", metadata.organization);
    let considerations = "All figures are aggregates computed from the event log. Resources appear only as pseudonyms and no case-level records are included. Waiting time is the elapsed time between consecutive events.";
    DefaultFields {
        zero_shot: ZeroShotPromptFields {
            role: DEFAULT_ROLE.into(),
            task: task_text.clone(),
            process: process.clone(),
            organization: organization.clone(),
            sector: format!("{}. Take the constraints and benchmarks typical of this sector into account.", metadata.sector),
            kpis: w.kpis.into(),
            objective: "Help the process owner understand how the process performs today and where it can improve.".into(),
            considerations: considerations.into(),
            deliverables: "A concise answer organized under short headings, with bullet points that cite the KPI values they rely on.".into(),
            analysis_guidelines: "Be precise and avoid jargon. State assumptions explicitly and keep observations separate from conclusions.".into(),
            additional_instructions: "If the data cannot support a conclusion, say so and name the additional data that would settle it.".into(),
        },
        optimized: OptimizedPromptFields {
            role: DEFAULT_ROLE.into(),
            task: task_text,
            process,
            organization,
            analysis_focus: w.focus.into(),
            deep_dive: w.deep_dive.into(),
            recommendations: "Rank proposed improvements by expected impact and tie each one to the KPI that motivates it.".into(),
            additional_considerations: considerations.into(),
        },
    }
}

// ---- module data rendering -------------------------------------------------

struct Table {
    header: String,
    /// `(frequency, text)`, in display order.
    rows: Vec<(u64, String)>,
}

enum Piece {
    Line(String),
    Table(Table),
}

struct ModuleDataDoc {
    pieces: Vec<Piece>,
}

fn truncation_marker(n: usize) -> String {
    format!("\u{2026} truncated {n} rows")
}

fn line_chars(s: &str) -> usize {
    s.chars().count() + 1
}

impl ModuleDataDoc {
    /// Length of the rendering with every table row dropped.
    fn minimal_chars(&self) -> usize {
        self.pieces
            .iter()
            .map(|piece| match piece {
                Piece::Line(l) => line_chars(l),
                Piece::Table(t) if t.rows.is_empty() => line_chars(&t.header),
                Piece::Table(t) => line_chars(&t.header) + line_chars(&truncation_marker(t.rows.len())),
            })
            .sum()
    }

    /// Renders, dropping rows lowest-frequency-first (later rows first on
    /// ties) until the text fits in `max_chars`.
    fn render_within(&self, max_chars: usize) -> Option<String> {
        let mut total = 0usize;
        let mut candidates: Vec<(u64, usize, usize, usize)> = Vec::new();
        for (t, piece) in self.pieces.iter().enumerate() {
            match piece {
                Piece::Line(l) => total += line_chars(l),
                Piece::Table(table) => {
                    total += line_chars(&table.header);
                    for (r, (freq, text)) in table.rows.iter().enumerate() {
                        let len = 2 + line_chars(text);
                        total += len;
                        candidates.push((*freq, t, r, len));
                    }
                }
            }
        }
        candidates.sort_by(|a, b| a.0.cmp(&b.0).then((b.1, b.2).cmp(&(a.1, a.2))));

        let mut dropped: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        let mut dropped_count: BTreeMap<usize, usize> = BTreeMap::new();
        let mut next = 0;
        while total > max_chars {
            let &(_, t, r, len) = candidates.get(next)?;
            next += 1;
            let count = dropped_count.entry(t).or_default();
            let old_marker = if *count == 0 { 0 } else { line_chars(&truncation_marker(*count)) };
            *count += 1;
            total = total - len - old_marker + line_chars(&truncation_marker(*count));
            let Piece::Table(table) = &self.pieces[t] else { unreachable!() };
            dropped.entry(t).or_insert_with(|| alloc::vec![false; table.rows.len()])[r] = true;
        }

        let mut out = String::new();
        for (t, piece) in self.pieces.iter().enumerate() {
            match piece {
                Piece::Line(l) => {
                    out.push_str(l);
                    out.push('\n');
                }
                Piece::Table(table) => {
                    out.push_str(&table.header);
                    out.push('\n');
                    for (r, (_, text)) in table.rows.iter().enumerate() {
                        if dropped.get(&t).is_some_and(|d| d[r]) {
                            continue;
                        }
                        out.push_str("- ");
                        out.push_str(text);
                        out.push('\n');
                    }
                    if let Some(&n) = dropped_count.get(&t) {
                        out.push_str(&truncation_marker(n));
                        out.push('\n');
                    }
                }
            }
        }
        debug_assert_eq!(out.chars().count(), total);
        Some(out)
    }
}

fn clean(label: &str) -> String {
    label.replace(['\n', '\r'], " ")
}

fn edge(from: &str, to: &str) -> String {
    format!("{} -> {}", clean(from), clean(to))
}

fn describe(module: Module, payload: &ModulePayload, pieces: &mut Vec<Piece>) {
    let line = |pieces: &mut Vec<Piece>, s: String| pieces.push(Piece::Line(s));
    line(pieces, format!("[{}]", module.title()));
    match payload {
        ModulePayload::Dashboard(p) => {
            let s = &p.structural;
            let t = &p.temporal;
            line(pieces, format!(
                "Structural Analysis: Total cases: {}, Total activities: {}, Total variants: {}, Total cases with rework: {}",
                s.total_cases, s.total_activities, s.total_variants, s.total_cases_with_rework
            ));
            line(pieces, format!(
                "Temporal analysis: First event date: {}, Last event date: {}, Span: {}s",
                t.first_event_date, t.last_event_date, t.span_secs
            ));
        }
        ModulePayload::Discovery(p) => {
            let counted = |m: &BTreeMap<String, u64>| {
                m.iter().map(|(a, n)| format!("{} ({n})", clean(a))).collect::<Vec<_>>().join(", ")
            };
            line(pieces, format!(
                "Activities: {}, Directly-follows relations: {}, Variants: {}",
                p.dfg.activity_frequencies.len(),
                p.dfg.edges.len(),
                p.variants.len()
            ));
            line(pieces, format!("Start activities: {}", counted(&p.dfg.start_activities)));
            line(pieces, format!("End activities: {}", counted(&p.dfg.end_activities)));
            let mut activities: Vec<(u64, String)> =
                p.dfg.activity_frequencies.iter().map(|(a, n)| (*n, format!("{} | {n}", clean(a)))).collect();
            activities.sort_by_key(|r| core::cmp::Reverse(r.0));
            pieces.push(Piece::Table(Table { header: "Activity frequencies (activity | events):".into(), rows: activities }));
            pieces.push(Piece::Table(Table {
                header: "Variants (cases | activity sequence):".into(),
                rows: p
                    .variants
                    .iter()
                    .map(|v| {
                        let seq: Vec<String> = v.activity_sequence.iter().map(|a| clean(a)).collect();
                        (v.frequency, format!("{} | {}", v.frequency, seq.join(" -> ")))
                    })
                    .collect(),
            }));
            let mut edges: Vec<(u64, String)> =
                p.dfg.edges.iter().map(|((a, b), n)| (*n, format!("{} | {n}", edge(a, b)))).collect();
            edges.sort_by_key(|r| core::cmp::Reverse(r.0));
            pieces.push(Piece::Table(Table { header: "Directly-follows relations (relation | frequency):".into(), rows: edges }));
        }
        ModulePayload::Performance(p) => {
            let d = &p.case_duration;
            line(pieces, format!(
                "Case duration (seconds): count {}, min {}, max {}, mean {}, median {}",
                d.count, d.min_secs, d.max_secs, d.mean_secs, d.median_secs
            ));
            line(pieces, "Waiting time is the elapsed time between consecutive events; service time is not available from single-timestamp events.".into());
            pieces.push(Piece::Table(Table {
                header: "Bottlenecks (relation | mean waiting | frequency):".into(),
                rows: p
                    .bottlenecks
                    .iter()
                    .map(|b| (b.frequency, format!("{} | {}s | {}", edge(&b.from, &b.to), b.mean_waiting_secs, b.frequency)))
                    .collect(),
            }));
            let mut waits: Vec<(u64, String)> = p
                .edge_waiting
                .iter()
                .map(|((a, b), s)| {
                    (s.count, format!("{} | n={} | mean {}s | median {}s | max {}s", edge(a, b), s.count, s.mean_secs, s.median_secs, s.max_secs))
                })
                .collect();
            waits.sort_by_key(|r| core::cmp::Reverse(r.0));
            pieces.push(Piece::Table(Table { header: "Waiting time per relation:".into(), rows: waits }));
            pieces.push(Piece::Table(Table {
                header: "Completed cases per day (date | cases):".into(),
                rows: p
                    .daily_throughput
                    .iter()
                    .filter(|t| t.completed_cases > 0)
                    .map(|t| (t.completed_cases, format!("{} | {}", t.bucket_start, t.completed_cases)))
                    .collect(),
            }));
        }
        ModulePayload::Conformance(p) => {
            let m = &p.model;
            let source = match (p.model_source, &p.thresholds) {
                (ModelSource::Discovered, Some(t)) => format!(
                    "discovered from the log (dependency threshold {}, frequency threshold {})",
                    t.dependency, t.frequency
                ),
                _ => "supplied reference model".to_string(),
            };
            line(pieces, format!(
                "Reference model: {source}; {} activities, {} allowed relations, {} allowed starts, {} allowed ends",
                m.activities.len(),
                m.allowed_edges.len(),
                m.allowed_starts.len(),
                m.allowed_ends.len()
            ));
            line(pieces, format!(
                "Summary: fitness {:.3}, {} violating cases of {}; moves allowed {} of {}",
                p.report.log_fitness,
                p.report.violating_case_count,
                p.report.per_case_fitness.len(),
                p.report.allowed_moves,
                p.report.total_moves
            ));
            pieces.push(Piece::Table(Table {
                header: "Violations by kind (kind | count):".into(),
                rows: p.top_violation_kinds.iter().map(|k| (k.count, format!("{} | {}", k.kind, k.count))).collect(),
            }));
        }
        ModulePayload::Orgmining(p) => {
            line(pieces, format!(
                "Resources: {}, Handover relations: {}, Total handovers: {}",
                p.handover.resources.len(),
                p.handover.edges.len(),
                p.handover.total_handovers()
            ));
            if p.no_resources {
                line(pieces, "No events carry a resource; the handover network is empty.".into());
            }
            let mut handovers: Vec<(u64, String)> =
                p.handover.edges.iter().map(|((a, b), n)| (*n, format!("{} | {n}", edge(a, b)))).collect();
            handovers.sort_by_key(|r| core::cmp::Reverse(r.0));
            pieces.push(Piece::Table(Table { header: "Handovers of work (from -> to | count):".into(), rows: handovers }));
            pieces.push(Piece::Table(Table {
                header: "Workload (resource | events):".into(),
                rows: p.workload.iter().map(|w| (w.events, format!("{} | {}", clean(&w.resource), w.events))).collect(),
            }));
            let mut cells: Vec<(u64, String)> = p
                .matrix
                .counts
                .iter()
                .flat_map(|(r, row)| row.iter().map(move |(a, n)| (*n, format!("{} | {} | {n}", clean(r), clean(a)))))
                .collect();
            cells.sort_by_key(|r| core::cmp::Reverse(r.0));
            pieces.push(Piece::Table(Table { header: "Resource-activity matrix (resource | activity | events):".into(), rows: cells }));
        }
    }
}

fn module_data_doc(outputs: &BTreeMap<Module, ModuleOutputRecord>) -> Result<ModuleDataDoc, PromptError> {
    if outputs.is_empty() {
        return Err(PromptError::NoModuleOutputs);
    }
    let mut pieces = Vec::new();
    for (module, record) in outputs {
        describe(*module, &record.decode()?, &mut pieces);
    }
    Ok(ModuleDataDoc { pieces })
}

/// Renders module data within `budget`, one titled block per module in
/// fixed module order. Table rows are dropped lowest-frequency-first when
/// needed and each shortened table ends with a truncation marker.
pub fn render_module_data(
    outputs: &BTreeMap<Module, ModuleOutputRecord>,
    budget: RenderBudget,
) -> Result<String, PromptError> {
    let doc = module_data_doc(outputs)?;
    doc.render_within(budget.max_chars()).ok_or_else(|| PromptError::BudgetTooSmall {
        needed_tokens: doc.minimal_chars().div_ceil(4),
        budget_tokens: budget.max_prompt_tokens,
    })
}

/// Builds the full prompt within `budget`. Truncation order: module data
/// rows, then Additional Instructions, then Considerations (Additional
/// Considerations for the optimized style). Role, Task and Process are kept.
pub fn assemble_prompt(
    fields: &PromptFields,
    task: AnalysisTask,
    outputs: &BTreeMap<Module, ModuleOutputRecord>,
    budget: RenderBudget,
) -> Result<String, PromptError> {
    let doc = module_data_doc(outputs)?;
    let max_chars = budget.max_chars();
    let mut fields = fields.clone();
    loop {
        let skeleton = fields.build(task, "")?;
        // the empty-data skeleton carries one newline that real data replaces
        let fixed = skeleton.chars().count() - 1;
        if fixed < max_chars {
            if let Some(data) = doc.render_within(max_chars - fixed) {
                let prompt = fields.build(task, &data)?;
                debug_assert!(estimate_tokens(&prompt) <= budget.max_prompt_tokens);
                return Ok(prompt);
            }
        }
        if !fields.drop_next() {
            return Err(PromptError::BudgetTooSmall {
                needed_tokens: (fixed + doc.minimal_chars()).div_ceil(4),
                budget_tokens: budget.max_prompt_tokens,
            });
        }
    }
}
