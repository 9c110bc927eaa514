//! Command-line interface. [`run`] takes its streams as arguments so the
//! whole CLI can be driven from tests.

use std::io::{BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use pmchat_core::discovery::{DirectlyFollowsGraph, ProcessModel, Thresholds};
use pmchat_core::evaluation::{GroupBy, RatingFilter};
use pmchat_core::orgmining::HandoverNetwork;
use pmchat_core::prompt::{AnalysisTask, PromptStyle};
use pmchat_core::{LogMetadata, Module};

use crate::app::{App, AppConfig};
use crate::clock::SystemClock;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::ingest::ColumnMapping;
use crate::session::Response;
use crate::store::Store;

#[derive(Parser, Debug)]
#[command(name = "pmchat", version, about = "Conversational process mining over CSV event logs")]
struct Cli {
    /// Data directory (defaults to PMCHAT_DATA_DIR or ./pmchat-data)
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, clean and register a CSV event log
    Ingest(IngestArgs),
    /// Compute and store module KPIs
    Analyze(AnalyzeArgs),
    /// Print a module output as JSON or Graphviz DOT
    Export {
        log_id: String,
        /// structural, temporal, dfg, variants, performance, conformance or handover
        #[arg(long)]
        view: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Build a module prompt and send it, or print it with --dry-run
    Prompt {
        log_id: String,
        #[arg(long)]
        module: Module,
        #[arg(long, default_value = "optimized")]
        style: PromptStyle,
        #[arg(long, default_value = "analytics")]
        task: AnalysisTask,
        #[arg(long)]
        dry_run: bool,
    },
    /// Interactive session: follow-up questions read line by line
    Chat {
        log_id: String,
        #[arg(long, default_value = "optimized")]
        style: PromptStyle,
        /// Run this module's analysis before reading questions
        #[arg(long)]
        module: Option<Module>,
        #[arg(long, default_value = "analytics")]
        task: AnalysisTask,
    },
    /// Print a session's history as JSON
    History { session_id: String },
    /// Run the HTTP API
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Expert rating bookkeeping
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// CSV file, or - for standard input
    csv: String,
    #[arg(long, default_value = "case_id")]
    case_col: String,
    #[arg(long, default_value = "activity")]
    activity_col: String,
    #[arg(long, default_value = "timestamp")]
    timestamp_col: String,
    /// Resource column; defaults to "resource" when the file has one
    #[arg(long)]
    resource_col: Option<String>,
    #[arg(long, default_value = "")]
    sector: String,
    #[arg(long, default_value = "")]
    org: String,
    #[arg(long, default_value = "")]
    process: String,
    #[arg(long, default_value = "")]
    economic_activity: String,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    log_id: String,
    /// A module name or "all"
    #[arg(long, default_value = "all")]
    module: String,
    #[arg(long)]
    dependency_threshold: Option<f64>,
    #[arg(long)]
    frequency_threshold: Option<u64>,
    /// Reference model (JSON) for conformance instead of the discovered one
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Also print the payload JSON
    #[arg(long)]
    print: bool,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Import ratings from a category,sector,gender,style,module CSV
    Import { csv: PathBuf },
    /// Category distribution, optionally grouped and filtered
    Report {
        #[arg(long, default_value = "overall")]
        group_by: GroupBy,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        json: bool,
    },
    /// Zero-shot versus optimized distributions and the Good-percentage delta
    Compare {
        #[command(flatten)]
        filter: FilterArgs,
    },
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    sector: Option<String>,
    #[arg(long)]
    gender: Option<String>,
    #[arg(long)]
    style: Option<PromptStyle>,
    #[arg(long = "for-module")]
    module: Option<Module>,
}

impl From<FilterArgs> for RatingFilter {
    fn from(f: FilterArgs) -> Self {
        RatingFilter { sector: f.sector, gender: f.gender, style: f.style, module: f.module }
    }
}

pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, S>(args: I, config: &Config, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(io.stderr, "{text}") } else { write!(io.stdout, "{text}") };
            return e.exit_code();
        }
    };
    match execute(cli, config, io) {
        Ok(()) => 0,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e}");
            if let Error::RatingRows(rows) = &e {
                for row in rows {
                    let _ = writeln!(io.stderr, "  line {}: {}", row.line, row.message);
                }
            }
            1
        }
    }
}

fn open_app(cli_dir: Option<PathBuf>, config: &Config) -> Result<App> {
    let store = Store::open(cli_dir.unwrap_or_else(|| config.data_dir.clone()))?;
    let gateway = Gateway::new(config.transport()?);
    let app_config = AppConfig { model_name: config.model.clone(), ..Default::default() };
    Ok(App::new(store, gateway, Arc::new(SystemClock), app_config))
}

fn execute(cli: Cli, config: &Config, io: &mut Io<'_>) -> Result<()> {
    let app = open_app(cli.data_dir, config)?;
    let out = &mut *io.stdout;
    match cli.command {
        Command::Ingest(args) => ingest(&app, args, io),
        Command::Analyze(args) => analyze(&app, args, out),
        Command::Export { log_id, view, format } => export(&app, &log_id, &view, &format, out),
        Command::Prompt { log_id, module, style, task, dry_run } => {
            if dry_run {
                let prompt = app.build_prompt(&log_id, module, style, task)?;
                out.write_all(prompt.text.as_bytes())?;
                return Ok(());
            }
            let session = app.create_session(&log_id, style)?;
            let result = app.run_analysis(&session.session_id, module, task)?;
            writeln!(out, "session {}", session.session_id)?;
            print_response(out, &result.response)?;
            Ok(())
        }
        Command::Chat { log_id, style, module, task } => chat(&app, &log_id, style, module, task, io),
        Command::History { session_id } => {
            let session = app.session(&session_id)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&session)?)?;
            Ok(())
        }
        Command::Serve { port, host } => {
            let addr = SocketAddr::new(host, port);
            writeln!(out, "listening on http://{addr} (data: {})", app.store().root().display())?;
            out.flush()?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::http::serve(Arc::new(app), addr, config.api_token.clone()))
        }
        Command::Eval(cmd) => eval(&app, cmd, out),
    }
}

fn ingest(app: &App, args: IngestArgs, io: &mut Io<'_>) -> Result<()> {
    let raw = if args.csv == "-" {
        let mut buf = Vec::new();
        io.stdin.read_to_end(&mut buf)?;
        buf
    } else {
        std::fs::read(&args.csv).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", args.csv)))?
    };
    let mapping = ColumnMapping {
        case: args.case_col,
        activity: args.activity_col,
        timestamp: args.timestamp_col,
        resource: args.resource_col,
    };
    let metadata = LogMetadata {
        sector: args.sector,
        economic_activity: args.economic_activity,
        process_name: args.process,
        organization: args.org,
    };
    let summary = app.ingest(&raw, &mapping, metadata)?;
    let out = &mut *io.stdout;
    writeln!(out, "{}", summary.log_id)?;
    let state = if summary.newly_registered { "registered" } else { "already registered" };
    writeln!(out, "{} cases, {} events ({state})", summary.cases, summary.events)?;
    let r = summary.cleaning_report;
    writeln!(
        out,
        "dropped rows: empty-field {}, bad-timestamp {}, duplicate {}",
        r.empty_field, r.bad_timestamp, r.duplicate
    )?;
    for row in &summary.row_errors {
        writeln!(io.stderr, "warning: line {}: {}", row.line, row.message)?;
    }
    Ok(())
}

fn analyze(app: &App, args: AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let modules: Vec<Module> = if args.module.eq_ignore_ascii_case("all") {
        Module::ALL.to_vec()
    } else {
        vec![args.module.parse().map_err(|e| Error::Invalid(format!("{e}")))?]
    };
    let mut options = app.config().engine.clone();
    if args.dependency_threshold.is_some() || args.frequency_threshold.is_some() {
        options.thresholds = Thresholds::new(
            args.dependency_threshold.unwrap_or(options.thresholds.dependency),
            args.frequency_threshold.unwrap_or(options.thresholds.frequency),
        )
        .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    if let Some(path) = &args.model {
        let text = std::fs::read_to_string(path)?;
        let model: ProcessModel =
            serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        model.validate().map_err(|e| Error::Invalid(e.to_string()))?;
        options.reference_model = Some(model);
    }
    if let Some(k) = args.top_k {
        options.bottleneck_top_k = k;
    }
    for module in modules {
        let outcome = app.analyze_with(&args.log_id, module, &options)?;
        let state = if outcome.cache_hit { "cache hit" } else { "computed" };
        writeln!(out, "{module}: {state} (version {})", outcome.version)?;
        if args.print {
            writeln!(out, "{}", serde_json::to_string_pretty(&outcome.record.payload)?)?;
        }
    }
    Ok(())
}

fn export(app: &App, log_id: &str, view: &str, format: &str, out: &mut dyn Write) -> Result<()> {
    let (module, key) = match view {
        "structural" | "temporal" => (Module::Dashboard, Some(view)),
        "dfg" => (Module::Discovery, Some("dfg")),
        "variants" => (Module::Discovery, Some("variants")),
        "performance" => (Module::Performance, None),
        "conformance" => (Module::Conformance, None),
        "handover" => (Module::Orgmining, Some("handover")),
        other => return Err(Error::Invalid(format!("unknown view {other:?}"))),
    };
    let payload = app.module_payload(log_id, module)?;
    let value = key.map_or(payload.clone(), |k| payload[k].clone());
    match (format, view) {
        ("json", _) => writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?,
        ("dot", "dfg") => out.write_all(serde_json::from_value::<DirectlyFollowsGraph>(value)?.to_dot().as_bytes())?,
        ("dot", "handover") => out.write_all(serde_json::from_value::<HandoverNetwork>(value)?.to_dot().as_bytes())?,
        ("dot", _) => return Err(Error::Invalid("DOT export is available for dfg and handover only".into())),
        (other, _) => return Err(Error::Invalid(format!("unknown format {other:?} (json or dot)"))),
    }
    Ok(())
}

fn print_response(out: &mut dyn Write, response: &Response) -> Result<()> {
    match response {
        Response::Answered { content, .. } => writeln!(out, "{content}")?,
        Response::NotAvailable { attempts, reason } => {
            writeln!(out, "[N.A.] no answer after {attempts} attempt(s): {reason}")?
        }
    }
    Ok(())
}

const CHAT_HELP: &str = "commands: /analyze <module> [task], /history, /help, /quit; anything else is sent as a question";

fn chat(
    app: &App,
    log_id: &str,
    style: PromptStyle,
    module: Option<Module>,
    task: AnalysisTask,
    io: &mut Io<'_>,
) -> Result<()> {
    let session = app.create_session(log_id, style)?;
    let id = session.session_id;
    writeln!(io.stdout, "session {id} on log {log_id} ({style})")?;
    writeln!(io.stdout, "{CHAT_HELP}")?;
    if let Some(module) = module {
        let result = app.run_analysis(&id, module, task)?;
        print_response(io.stdout, &result.response)?;
    }
    let mut line = String::new();
    loop {
        write!(io.stdout, "> ")?;
        io.stdout.flush()?;
        line.clear();
        if io.stdin.read_line(&mut line)? == 0 {
            break;
        }
        let input = line.trim();
        let outcome = match input.split_whitespace().collect::<Vec<_>>().as_slice() {
            [] => continue,
            ["/quit"] | ["/exit"] => break,
            ["/help"] => {
                writeln!(io.stdout, "{CHAT_HELP}")?;
                continue;
            }
            ["/history"] => {
                for m in app.session(&id)?.history {
                    writeln!(io.stdout, "[{}] {}", m.role.as_str(), m.content)?;
                }
                continue;
            }
            ["/analyze", module, rest @ ..] if rest.len() <= 1 => (|| {
                let module: Module = module.parse().map_err(|e| Error::Invalid(format!("{e}")))?;
                let task: AnalysisTask = match rest.first() {
                    Some(t) => t.parse().map_err(Error::Invalid)?,
                    None => AnalysisTask::Analytics,
                };
                Ok(app.run_analysis(&id, module, task)?.response)
            })(),
            _ => app.follow_up(&id, input).map(|f| f.response),
        };
        match outcome {
            Ok(response) => print_response(io.stdout, &response)?,
            Err(e) => writeln!(io.stderr, "error: {e}")?,
        }
    }
    Ok(())
}

fn eval(app: &App, cmd: EvalCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        EvalCommand::Import { csv } => {
            let raw = std::fs::read(&csv).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", csv.display())))?;
            let ids = app.import_ratings_csv(&raw)?;
            writeln!(out, "imported {} ratings", ids.len())?;
        }
        EvalCommand::Report { group_by, filter, json } => {
            let report = app.rating_distribution(&filter.into(), group_by)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                out.write_all(report.to_text().as_bytes())?;
            }
        }
        EvalCommand::Compare { filter } => {
            let comparison = app.compare_styles(&filter.into())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&comparison)?)?;
        }
    }
    Ok(())
}
