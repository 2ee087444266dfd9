//! Command-line entry points. Every command exits 0 on success; failures
//! print one `error[Class]: message` line on stderr and exit non-zero.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use futures::stream::{self, StreamExt, TryStreamExt};

use crate::agent::{run_experiment, write_atomic, AgentError, ChainAgent, ExperimentSpec};
use crate::cache::{Cache, CacheError, CacheSource, CacheStats};
use crate::classifier::{ScanOptions, StatusScanner};
use crate::config::{ConfigError, ServiceConfig};
use crate::evaluation::{
    judge_answer, judge_solvability, judge_task_state, legacy_pass_report, legacy_win_report, load_answers,
    load_tasks, sopr, sowr, AnswerRecord, EvalError, LlmComparator, MetricReport, Pairing, Task, TaskGroup,
    TaskState,
};
use crate::gateway::{make_fault_plan, router, FaultMode, FaultRequest, GatewayClient, GatewayError, ToolService};
use crate::llm::ChatModel;
use crate::model::{Judgment, SolvabilityVerdict};
use crate::prompts::PromptSet;

#[derive(Debug, Parser)]
#[command(name = "toolgate", version, about = "Stable virtual tool-API gateway and evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the gateway over HTTP until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Administer the response cache.
    Cache(CacheArgs),
    /// Probe every documented API once and report status percentages.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured documentation directory.
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the chain-of-thought agent over a task file.
    Run(RunArgs),
    /// Score answers.
    Eval(EvalArgs),
    /// Filter a task file down to the tasks the judges vote solvable.
    Solvable {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    /// Service config naming the cache directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cache directory; takes precedence over the config.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// Import a record dump, keeping only cacheable responses.
    Import {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        source: SourceArg,
    },
    /// Print record counts and hit rate.
    Stats {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Drop records that are no longer cacheable.
    Filter,
    /// Rewrite every cache file canonically.
    Compact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Train,
    Test,
    New,
}

impl From<SourceArg> for CacheSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Train => CacheSource::TrainSet,
            SourceArg::Test => CacheSource::TestSet,
            SourceArg::New => CacheSource::NewExperiment,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    HardFail,
    VirtualFallback,
}

impl From<ModeArg> for FaultMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::HardFail => FaultMode::HardFail,
            ModeArg::VirtualFallback => FaultMode::VirtualFallback,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    group: Option<String>,
    #[arg(long, default_value = "cot")]
    method: String,
    #[arg(long)]
    output: PathBuf,
    /// Fraction of tools to take down for the run.
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "virtual-fallback")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    metric: MetricArg,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    answers: PathBuf,
    /// Reference answers; required for sowr, optional for legacy.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Sopr,
    Sowr,
    Legacy,
}

/// Failure surfaced to the shell.
#[derive(Debug)]
pub struct CliError {
    pub class: &'static str,
    pub message: String,
    pub code: i32,
}

impl CliError {
    fn new(class: &'static str, message: impl ToString) -> Self {
        Self {
            class,
            message: message.to_string(),
            code: 1,
        }
    }

    fn usage(message: impl ToString) -> Self {
        Self {
            class: "UsageError",
            message: message.to_string(),
            code: 2,
        }
    }

    pub fn line(&self) -> String {
        format!("error[{}]: {}", self.class, self.message.replace('\n', " "))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let class = match &e {
            ConfigError::Cache(c) => return c.to_cli(),
            ConfigError::MissingSecret(_) => "MissingSecret",
            ConfigError::Docs(_) => "DocsError",
            _ => "ConfigError",
        };
        CliError::new(class, e)
    }
}

trait IntoCli {
    fn to_cli(&self) -> CliError;
}

impl IntoCli for CacheError {
    fn to_cli(&self) -> CliError {
        let class = match self {
            CacheError::Io { .. } => "CacheIoError",
            CacheError::Corrupt { .. } => "CacheCorrupt",
            CacheError::ImportFormat { .. } => "ImportFormatError",
            CacheError::Key(_) => "KeyDerivationError",
        };
        CliError::new(class, self)
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        e.to_cli()
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let class = match &e {
            EvalError::JudgingUnavailable(_) => "JudgingUnavailable",
            EvalError::InvalidInput(_) => "InvalidInput",
            EvalError::Io { .. } => "IoError",
        };
        CliError::new(class, e)
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::new(e.class(), e)
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Gateway(g) => g.into(),
            AgentError::Model(m) => CliError::new("ModelUnavailable", m),
            e @ AgentError::Io { .. } => CliError::new("IoError", e),
        }
    }
}

type CliResult = Result<(), CliError>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(tracing::Level::WARN)
        .try_init();
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error[RuntimeError]: {e}");
            return 1;
        }
    };
    match runtime.block_on(execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.code
        }
    }
}

pub async fn execute(command: Command) -> CliResult {
    match command {
        Command::Serve { config, listen } => cmd_serve(&config, listen).await,
        Command::Cache(args) => cmd_cache(args),
        Command::Scan { config, docs, output } => cmd_scan(&config, docs, &output).await,
        Command::Run(args) => cmd_run(args).await,
        Command::Eval(args) => cmd_eval(args).await,
        Command::Solvable {
            config,
            tasks,
            group,
            output,
        } => cmd_solvable(&config, &tasks, group.as_deref(), &output).await,
    }
}

fn parse_group(group: Option<&str>) -> Result<Option<TaskGroup>, CliError> {
    group.map(str::parse).transpose().map_err(CliError::from)
}

fn write_output(path: &Path, body: &str) -> CliResult {
    write_atomic(path, body.as_bytes())
        .map_err(|e| CliError::new("IoError", format!("cannot write {}: {e}", path.display())))
}

async fn cmd_serve(config: &Path, listen: Option<String>) -> CliResult {
    let cfg = ServiceConfig::load(config)?;
    let gateway = Arc::new(cfg.gateway()?);
    let addr = listen.unwrap_or_else(|| cfg.listen.clone());
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| CliError::new("BindError", format!("cannot listen on {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| CliError::new("BindError", e))?;
    println!("listening on http://{local}");
    let _ = std::io::stdout().flush();
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::new("ServeError", e))
}

fn render_stats(stats: &CacheStats) -> String {
    let mut out = format!("{:<16} {:>8}\n", "source", "records");
    for s in CacheSource::ALL {
        out.push_str(&format!(
            "{:<16} {:>8}\n",
            format!("{s:?}"),
            stats.per_source_counts.get(&s).copied().unwrap_or(0)
        ));
    }
    out.push_str(&format!("{:<16} {:>8}\n", "total", stats.total));
    out.push_str(&format!("{:<16} {:>8}\n", "hits", stats.hits));
    out.push_str(&format!("{:<16} {:>8}\n", "misses", stats.misses));
    out.push_str(&format!("{:<16} {:>8.3}\n", "hit_rate", stats.hit_rate));
    out
}

fn cmd_cache(args: CacheArgs) -> CliResult {
    let dir = match (args.cache, args.config) {
        (Some(d), _) => d,
        (None, Some(c)) => ServiceConfig::load(&c)?.cache_path(),
        (None, None) => return Err(CliError::usage("cache commands need --cache or --config")),
    };
    let cache = Cache::open(&dir)?;
    match args.action {
        CacheAction::Import { path, source } => {
            let s = cache.import_records(&path, source.into())?;
            println!("kept {} dropped {}", s.kept, s.dropped);
            if s.unchanged > 0 {
                println!("unchanged {}", s.unchanged);
            }
        }
        CacheAction::Stats { output } => {
            let stats = cache.stats();
            print!("{}", render_stats(&stats));
            if let Some(p) = output {
                write_output(&p, &serde_json::to_string_pretty(&stats).expect("stats serialize"))?;
            }
        }
        CacheAction::Filter => println!("removed {}", cache.filter()?),
        CacheAction::Compact => {
            cache.compact()?;
            println!("compacted {} records", cache.len());
        }
    }
    Ok(())
}

async fn cmd_scan(config: &Path, docs: Option<PathBuf>, output: &Path) -> CliResult {
    let cfg = ServiceConfig::load(config)?;
    let index = match docs {
        Some(d) => Arc::new(crate::docs::DocIndex::load_dir(&d).map_err(|e| CliError::new("DocsError", e))?),
        None => cfg.load_docs()?,
    };
    let upstream = cfg.upstream()?;
    let (writer, workers) = cfg.scan_model()?;
    if index.is_empty() {
        eprintln!("warning: no API documentation found; writing an empty report");
    }
    let mut scanner = StatusScanner::new(writer, upstream)
        .with_prompts(cfg.prompts()?)
        .with_options(ScanOptions {
            workers,
            ..ScanOptions::default()
        });
    if let Ok(cache) = cfg.open_cache() {
        scanner = scanner.with_examples(cache);
    }
    let docs: Vec<_> = index.iter().cloned().collect();
    let report = scanner
        .scan(&docs)
        .await
        .map_err(|e| CliError::new("ScanConfigError", e))?;
    write_output(output, &serde_json::to_string_pretty(&report).expect("report serialize"))?;
    print!("{}", report.render_table());
    Ok(())
}

async fn cmd_run(args: RunArgs) -> CliResult {
    if args.repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let cfg = ServiceConfig::load(&args.config)?;
    let tasks = load_tasks(&args.tasks, parse_group(args.group.as_deref())?)?;
    let docs = cfg.load_docs()?;
    let section = cfg.agent_section()?.clone();
    let agent = ChainAgent::new(cfg.agent_model()?, section.step_budget).with_prompts(cfg.prompts()?);
    let fault = args.proportion.map(|p| FaultRequest {
        proportion: p,
        seed: args.seed,
        mode: args.mode.into(),
        universe: None,
    });

    let service: Box<dyn ToolService> = match &cfg.gateway_url {
        Some(url) => {
            let client = GatewayClient::new(url.clone());
            client.health().await?;
            match &fault {
                Some(f) => {
                    client.install_fault(f).await?;
                }
                None => client.clear_fault().await?,
            }
            Box::new(client)
        }
        None => {
            let gw = cfg.gateway()?;
            if let Some(f) = &fault {
                // tools named by tasks join the documented universe
                let mut universe: std::collections::BTreeSet<_> = docs.tools().into_iter().collect();
                universe.extend(tasks.iter().flat_map(|t| t.available_tools.iter().map(|id| id.tool())));
                let universe: Vec<_> = universe.into_iter().collect();
                gw.install_fault(make_fault_plan(&universe, f.proportion, f.seed, f.mode)?);
            }
            Box::new(gw)
        }
    };

    let spec = ExperimentSpec {
        method_label: args.method,
        repeats: args.repeats,
        output_dir: args.output,
        workers: section.workers,
    };
    let runs = run_experiment(&spec, &tasks, &docs, &agent, service.as_ref()).await?;
    let finished = runs.iter().flatten().filter(|a| is_finished(a)).count();
    println!(
        "ran {} task(s) x {} repeat(s); {} finished",
        tasks.len(),
        spec.repeats,
        finished
    );
    Ok(())
}

fn is_finished(a: &AnswerRecord) -> bool {
    serde_json::from_str::<crate::agent::Transcript>(&a.solution_path)
        .map(|t| t.finished)
        .unwrap_or(false)
}

const JUDGE_WORKERS: usize = 8;

/// Judges every answer `repeats` times, in task order.
async fn judge_all(
    pairs: &[(&Task, &AnswerRecord)],
    judge: &ChatModel,
    prompts: &PromptSet,
    repeats: usize,
) -> Result<Vec<Vec<Judgment>>, EvalError> {
    stream::iter(pairs)
        .map(|(t, a)| async move {
            let mut out = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                out.push(judge_answer(t, a, judge, prompts).await?);
            }
            Ok::<_, EvalError>(out)
        })
        .buffered(JUDGE_WORKERS)
        .try_collect()
        .await
}

async fn states_all(
    pairs: &[(&Task, &AnswerRecord)],
    judge: &ChatModel,
    prompts: &PromptSet,
    repeats: usize,
) -> Result<Vec<Vec<TaskState>>, EvalError> {
    stream::iter(pairs)
        .map(|(t, a)| async move {
            let mut out = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                out.push(judge_task_state(t, a, judge, prompts).await?);
            }
            Ok::<_, EvalError>(out)
        })
        .buffered(JUDGE_WORKERS)
        .try_collect()
        .await
}

/// Tasks that have an answer in `answers`, in task-file order.
fn matched<'a>(
    tasks: &'a [Task],
    answers: &'a BTreeMap<String, AnswerRecord>,
) -> Vec<(&'a Task, &'a AnswerRecord)> {
    let out: Vec<_> = tasks
        .iter()
        .filter_map(|t| answers.get(&t.task_id).map(|a| (t, a)))
        .collect();
    if out.len() < tasks.len() {
        eprintln!(
            "warning: {} task(s) have no answer and are not scored",
            tasks.len() - out.len()
        );
    }
    out
}

async fn cmd_eval(args: EvalArgs) -> CliResult {
    if matches!(args.metric, MetricArg::Sowr) && args.reference.is_none() {
        return Err(CliError::usage("sowr requires --reference"));
    }
    if args.repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let cfg = ServiceConfig::load(&args.config)?;
    let prompts = cfg.prompts()?;
    let judge = cfg.evaluator()?;
    let tasks = load_tasks(&args.tasks, parse_group(args.group.as_deref())?)?;
    let answers = load_answers(&args.answers)?;
    let cand = matched(&tasks, &answers);
    let groups: BTreeMap<String, TaskGroup> = tasks.iter().map(|t| (t.task_id.clone(), t.group)).collect();

    let report: MetricReport = match args.metric {
        MetricArg::Sopr => {
            let verdicts = judge_all(&cand, &judge, &prompts, args.repeats).await?;
            let table = cand
                .iter()
                .zip(verdicts)
                .map(|((t, _), v)| (t.task_id.clone(), v))
                .collect();
            sopr(&table, &groups)?
        }
        MetricArg::Sowr => {
            let reference = load_answers(args.reference.as_deref().expect("checked above"))?;
            let both: Vec<_> = cand
                .into_iter()
                .filter_map(|(t, a)| reference.get(&t.task_id).map(|r| (t, a, r)))
                .collect();
            let c_pairs: Vec<_> = both.iter().map(|(t, a, _)| (*t, *a)).collect();
            let r_pairs: Vec<_> = both.iter().map(|(t, _, r)| (*t, *r)).collect();
            let cv = judge_all(&c_pairs, &judge, &prompts, args.repeats).await?;
            let rv = judge_all(&r_pairs, &judge, &prompts, args.repeats).await?;
            let pairs: Vec<Pairing> = both
                .iter()
                .zip(cv.into_iter().zip(rv))
                .map(|((t, a, r), (cv, rv))| Pairing {
                    task: (*t).clone(),
                    candidate: (*a).clone(),
                    reference: (*r).clone(),
                    candidate_verdicts: cv,
                    reference_verdicts: rv,
                })
                .collect();
            let comparator = LlmComparator {
                model: judge.clone(),
                prompts: prompts.clone(),
            };
            sowr(&pairs, &comparator).await?
        }
        MetricArg::Legacy => match &args.reference {
            None => {
                let verdicts = judge_all(&cand, &judge, &prompts, args.repeats).await?;
                let states = states_all(&cand, &judge, &prompts, args.repeats).await?;
                let entries = cand
                    .iter()
                    .zip(states.into_iter().zip(verdicts))
                    .map(|((t, _), (s, v))| (t.task_id.clone(), s.into_iter().zip(v).collect()))
                    .collect();
                legacy_pass_report(&entries, &groups, args.seed)?
            }
            Some(reference) => {
                let reference = load_answers(reference)?;
                let both: Vec<_> = cand
                    .into_iter()
                    .filter_map(|(t, a)| reference.get(&t.task_id).map(|r| (t, a, r)))
                    .collect();
                let c_pairs: Vec<_> = both.iter().map(|(t, a, _)| (*t, *a)).collect();
                let r_pairs: Vec<_> = both.iter().map(|(t, _, r)| (*t, *r)).collect();
                let cv = judge_all(&c_pairs, &judge, &prompts, args.repeats).await?;
                let rv = judge_all(&r_pairs, &judge, &prompts, args.repeats).await?;
                let cs = states_all(&c_pairs, &judge, &prompts, args.repeats).await?;
                let rs = states_all(&r_pairs, &judge, &prompts, args.repeats).await?;
                let items: Vec<(Pairing, Vec<(TaskState, TaskState)>)> = both
                    .iter()
                    .enumerate()
                    .map(|(i, (t, a, r))| {
                        (
                            Pairing {
                                task: (*t).clone(),
                                candidate: (*a).clone(),
                                reference: (*r).clone(),
                                candidate_verdicts: cv[i].clone(),
                                reference_verdicts: rv[i].clone(),
                            },
                            cs[i].iter().copied().zip(rs[i].iter().copied()).collect(),
                        )
                    })
                    .collect();
                let comparator = LlmComparator {
                    model: judge.clone(),
                    prompts: prompts.clone(),
                };
                legacy_win_report(&items, args.seed, &comparator).await?
            }
        },
    };
    write_output(&args.output, &report.to_json())?;
    print!("{}", report.render_table());
    Ok(())
}

async fn cmd_solvable(config: &Path, tasks: &Path, group: Option<&str>, output: &Path) -> CliResult {
    let cfg = ServiceConfig::load(config)?;
    let prompts = cfg.prompts()?;
    let (judges, threshold) = cfg.solvability_judges()?;
    let tasks = load_tasks(tasks, parse_group(group)?)?;
    let verdicts: Vec<_> = stream::iter(&tasks)
        .map(|t| judge_solvability(t, &judges, threshold, &prompts))
        .buffered(JUDGE_WORKERS)
        .try_collect()
        .await?;
    let kept: Vec<&Task> = tasks
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.verdict == SolvabilityVerdict::Solvable)
        .map(|(t, _)| t)
        .collect();
    let votes: BTreeMap<&str, _> = tasks.iter().map(|t| t.task_id.as_str()).zip(&verdicts).collect();
    write_output(output, &serde_json::to_string_pretty(&kept).expect("tasks serialize"))?;
    let mut votes_path = output.as_os_str().to_owned();
    votes_path.push(".votes.json");
    write_output(
        Path::new(&votes_path),
        &serde_json::to_string_pretty(&votes).expect("votes serialize"),
    )?;
    println!("solvable {} of {}", kept.len(), tasks.len());
    Ok(())
}
