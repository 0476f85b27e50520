// SPDX-License-Identifier: Apache-2.0

//! `timing-agent` command line: corpus generation, ingestion, ad-hoc
//! queries, task solving, graph inspection and benchmarking.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use timing_agent::agents::{self, Backend, HttpChatModel, LlmConfig, Mode, Scope, Task, TaskSpec};
use timing_agent::bench::{self, Suite};
use timing_agent::gen::{generate, GenSpec, GroundTruth};
use timing_agent::model::{CornerMode, Corpus};
use timing_agent::parser::{load_corpus, write_corpus, write_corpus_json, Severity};
use timing_agent::query;
use timing_agent::tdrg::{default_graph, Profile};

/// `println!` that ends the process quietly when stdout is a closed pipe,
/// as with `timing-agent tdrg show | head`.
macro_rules! outln {
    ($($arg:tt)*) => {
        emit(format_args!("{}\n", format_args!($($arg)*)))
    };
}

macro_rules! out {
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))
    };
}

fn emit(args: std::fmt::Arguments) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing stdout: {e}");
        std::process::exit(1);
    }
}

const ENDPOINT_ENV: &str = "TIMING_AGENT_ENDPOINT";
const MODEL_ENV: &str = "TIMING_AGENT_MODEL";

#[derive(Parser)]
#[command(name = "timing-agent", version, about = "Timing report analysis agent")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// TOML config file (`[llm]` table, `rc_threshold_ps`, `lc_deny_set`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus with recorded ground truth.
    GenCorpus(GenArgs),
    /// Parse a report directory and report diagnostics.
    Ingest(IngestArgs),
    /// Run one query against one corner/mode.
    Query(QueryArgs),
    /// Solve one task.
    Ask(AskArgs),
    /// Run a benchmark suite.
    Bench(BenchArgs),
    /// Inspect the relation graph.
    Tdrg {
        #[command(subcommand)]
        cmd: TdrgCmd,
    },
}

#[derive(Subcommand)]
enum TdrgCmd {
    Show {
        #[arg(long, default_value = "proposed")]
        profile: Profile,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "TT,SS")]
    corners: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "read,write,scan")]
    modes: Vec<String>,
    /// Paths per max/min report.
    #[arg(long, default_value_t = 200)]
    paths: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write canonical JSON documents next to the reports.
    #[arg(long)]
    with_json: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    db: PathBuf,
    /// Write canonical JSON documents here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    cm: CornerMode,
    program: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Llm,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendArg,
    /// Chat-completions URL for the llm backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long, default_value = "proposed")]
    tdrg_profile: Profile,
    /// Attach worked plan examples to the planning prompt.
    #[arg(long)]
    plan_examples: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Corpus directory (with `ground_truth.json` for benchmarks).
    #[arg(long)]
    db: Option<PathBuf>,
    /// Generate the default corpus in memory with this seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AskArgs {
    #[command(flatten)]
    source: Source,
    /// JSON task: `{"scope": ..., "task": {"category": ...}, "text"?: ...}`.
    #[arg(long)]
    task_file: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Single,
    Multi,
    Sensitivity,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    backend: BackendArgs,
    /// Repetitions per case; defaults to 1 scripted, 3 llm.
    #[arg(long)]
    runs: Option<usize>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-category CSV summary here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Exit 1 when the overall pass-rate is below this percentage.
    #[arg(long)]
    fail_under: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    llm: Option<LlmFile>,
    rc_threshold_ps: Option<f64>,
    lc_deny_set: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LlmFile {
    endpoint: Option<String>,
    model: Option<String>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    max_retries: Option<u32>,
    max_in_flight: Option<usize>,
    timeout_secs: Option<u64>,
    plan_examples: Option<bool>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Usage errors exit 2; everything else that fails exits 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Resolves backend settings: flags, then env, then config file, then defaults.
fn resolve_backend(args: &BackendArgs, file: &FileConfig) -> Result<Backend> {
    let mut cfg = LlmConfig::default();
    if let Some(f) = &file.llm {
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = f.$field.clone() { cfg.$field = v; } )* };
        }
        take!(endpoint, model, temperature, top_p, max_retries, max_in_flight, timeout_secs, plan_examples);
    }
    if let Ok(v) = std::env::var(ENDPOINT_ENV) {
        cfg.endpoint = v;
    }
    if let Ok(v) = std::env::var(MODEL_ENV) {
        cfg.model = v;
    }
    if let Some(v) = &args.endpoint {
        cfg.endpoint = v.clone();
    }
    if let Some(v) = &args.model {
        cfg.model = v.clone();
    }
    if let Some(v) = args.temperature {
        cfg.temperature = v;
    }
    if let Some(v) = args.max_retries {
        cfg.max_retries = v;
    }
    cfg.plan_examples |= args.plan_examples;

    let mut backend = match args.backend {
        BackendArg::Scripted => {
            let mut b = Backend::scripted();
            b.llm = cfg;
            b
        }
        BackendArg::Llm => {
            if cfg.endpoint.is_empty() {
                return Err(usage(format!("--backend llm needs --endpoint, {ENDPOINT_ENV} or [llm].endpoint")));
            }
            let model = HttpChatModel::from_env(cfg.clone()).map_err(|e| anyhow!("{e}"))?;
            Backend::llm(cfg, Arc::new(model))
        }
    };
    if let Some(t) = file.rc_threshold_ps {
        backend.rc_threshold_ps = t;
    }
    if let Some(d) = &file.lc_deny_set {
        backend.lc_deny_set = d.clone();
    }
    Ok(backend)
}

fn load(source: &Source, need_truth: bool) -> Result<(Corpus, Option<GroundTruth>)> {
    if let Some(seed) = source.seed {
        let (corpus, truth) = generate(&GenSpec { seed, ..GenSpec::default() })?;
        return Ok((corpus, Some(truth)));
    }
    let dir = source.db.as_ref().expect("clap enforces one source");
    let loaded = load_corpus(dir)?;
    report_diagnostics(&loaded.diagnostics);
    let truth_path = dir.join("ground_truth.json");
    let truth = if truth_path.is_file() {
        let text = fs::read_to_string(&truth_path)?;
        Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", truth_path.display()))?)
    } else if need_truth {
        bail!("{} is missing; benchmarks need the generator's ground truth", truth_path.display());
    } else {
        None
    };
    Ok((loaded.corpus, truth))
}

fn report_diagnostics(diags: &[timing_agent::parser::ParseDiagnostic]) {
    for d in diags.iter().take(20) {
        eprintln!("{d}");
    }
    if diags.len() > 20 {
        eprintln!("... {} more diagnostics", diags.len() - 20);
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    outln!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_corpus(a: &GenArgs, as_json: bool) -> Result<ExitCode> {
    let spec = GenSpec { seed: a.seed, corners: a.corners.clone(), modes: a.modes.clone(), paths_per_report: a.paths, ..GenSpec::default() };
    let (corpus, truth) = generate(&spec).map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_corpus(&corpus, &a.out)?;
    if a.with_json {
        write_corpus_json(&corpus, &a.out)?;
    }
    write_file(&a.out.join("ground_truth.json"), &(serde_json::to_string_pretty(&truth)? + "\n"))?;
    if as_json {
        print_json(&json!({"out": a.out, "manifest": corpus.manifest}))?;
    } else {
        let cms: Vec<String> = corpus.corner_modes().map(|c| c.to_string()).collect();
        outln!("wrote {} corner/modes ({}) to {}", cms.len(), cms.join(", "), a.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn ingest(a: &IngestArgs, as_json: bool) -> Result<ExitCode> {
    let loaded = load_corpus(&a.db)?;
    if let Some(out) = &a.out {
        write_corpus_json(&loaded.corpus, out)?;
    }
    let errors = loaded.diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
    if as_json {
        print_json(&json!({"manifest": loaded.corpus.manifest, "diagnostics": loaded.diagnostics}))?;
    } else {
        report_diagnostics(&loaded.diagnostics);
        for (cm, counts) in &loaded.corpus.manifest.row_counts {
            let c: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
            outln!("{cm}: {}", c.join(" "));
        }
        outln!("{} diagnostics ({errors} errors)", loaded.diagnostics.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_query(a: &QueryArgs, as_json: bool) -> Result<ExitCode> {
    let loaded = load_corpus(&a.db)?;
    let db = loaded.corpus.get(&a.cm).ok_or_else(|| anyhow!("{} not in {}", a.cm, a.db.display()))?;
    match query::run(&a.program, db) {
        Ok(r) => {
            if as_json {
                print_json(&r)?;
            } else {
                outln!("{}", r.value);
                outln!("({} source rows)", r.provenance.rows.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            if as_json {
                print_json(&json!({"error": e.to_string()}))?;
            }
            eprintln!("query error: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    text: Option<String>,
    scope: Scope,
    task: TaskSpec,
}

fn ask(a: &AskArgs, file: &FileConfig, as_json: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.task_file).with_context(|| format!("reading {}", a.task_file.display()))?;
    let tf: TaskFile = serde_json::from_str(&text).map_err(|e| usage(format!("--task-file: {e}")))?;
    let backend = resolve_backend(&a.backend, file)?;
    let (corpus, _) = load(&a.source, false)?;
    let mut task = Task::new(tf.id.unwrap_or_else(|| "task".into()), tf.scope, tf.task);
    if let Some(t) = tf.text {
        task.text = t;
    }
    let run = agents::solve(&task, &corpus, &default_graph(a.backend.tdrg_profile), &backend);
    if as_json {
        print_json(&run)?;
    } else {
        match (&run.status, &run.answer) {
            (agents::Status::Answered, Some(ans)) => {
                outln!("{}", serde_json::to_string_pretty(&ans.value)?);
                outln!("{}", ans.prose);
            }
            (agents::Status::Failed { reason }, _) => outln!("failed: {reason}"),
            _ => {}
        }
    }
    Ok(if run.answered() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_bench(a: &BenchArgs, file: &FileConfig, as_json: bool) -> Result<ExitCode> {
    let mut backend = resolve_backend(&a.backend, file)?;
    let runs = a.runs.unwrap_or(if backend.mode == Mode::Llm { 3 } else { 1 });
    let (corpus, truth) = load(&a.source, true)?;
    let truth = truth.expect("loaded with ground truth");
    // Goldens were computed with the corpus's own parameters.
    backend.rc_threshold_ps = truth.rc_threshold_ps;
    backend.lc_deny_set = truth.lc_deny_set.clone();
    let seed = truth.seed;
    let graph = default_graph(a.backend.tdrg_profile);
    let (value, rate) = match a.suite {
        SuiteArg::Sensitivity => {
            let s = bench::sensitivity_sweep(&corpus, &truth, &backend, seed, runs)?;
            if !as_json {
                outln!("profile   with_examples  without_examples");
                for r in &s.rows {
                    outln!("{:<9} {:>13.1}  {:>16.1}", r.profile.to_string(), r.with_examples, r.without_examples);
                }
            }
            let best = s.rows.iter().map(|r| r.with_examples.max(r.without_examples)).fold(0.0, f64::max);
            (serde_json::to_value(&s)?, best)
        }
        SuiteArg::Single | SuiteArg::Multi => {
            let (suite, cases) = match a.suite {
                SuiteArg::Single => (Suite::Single, bench::build_single_suite(&corpus, &truth, seed)?),
                _ => (Suite::Multi, bench::build_multi_suite(&corpus, &truth)?),
            };
            let r = bench::run_bench(suite, &cases, &corpus, &graph, &backend, seed, runs);
            if let Some(csv) = &a.csv {
                write_file(csv, &r.to_csv())?;
            }
            if !as_json {
                for s in &r.categories {
                    outln!("{:<18} {:>3}/{:<3} {:>6.1}%", s.category, s.passed, s.total, s.pass_rate);
                }
                for c in r.cases.iter().filter(|c| c.passed_runs < c.runs) {
                    eprintln!("{}: {}", c.id, c.diff.as_deref().unwrap_or(""));
                }
                outln!("overall pass_rate {:.1}%", r.overall.pass_rate);
            }
            (serde_json::to_value(&r)?, r.overall.pass_rate)
        }
    };
    let text = serde_json::to_string_pretty(&value)? + "\n";
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    if as_json {
        out!("{text}");
    }
    Ok(match a.fail_under {
        Some(min) if rate < min => ExitCode::FAILURE,
        _ => ExitCode::SUCCESS,
    })
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let file = read_config(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    match &cli.cmd {
        Cmd::GenCorpus(a) => gen_corpus(a, cli.json),
        Cmd::Ingest(a) => ingest(a, cli.json),
        Cmd::Query(a) => run_query(a, cli.json),
        Cmd::Ask(a) => ask(a, &file, cli.json),
        Cmd::Bench(a) => run_bench(a, &file, cli.json),
        Cmd::Tdrg { cmd: TdrgCmd::Show { profile } } => {
            let g = default_graph(*profile);
            if cli.json {
                print_json(&g)?;
            } else {
                out!("{}", g.render());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) if e.is::<Usage>() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
