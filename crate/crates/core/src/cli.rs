//! Command-line front end.
//!
//! Exit status is 0 when the operation completed with no failures or
//! violations, 1 on runtime failure or reported violations, and 2 on usage
//! errors.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use serde_json::{json, Value};

use crate::analysis::{
    depth_tables_csv, diversity_matrix_sparse, embed_directions, group_embeddings, EmbeddingSource, Grouping,
};
use crate::gateway::{Message, Role};
use crate::harness::{load_traces, materialize_verdicts, resolve_jobs, run_experiment, ExperimentSpec, SandboxSpec, JOBS_ENV};
use crate::sandbox::{evaluate, TestStatus};
use crate::types::{SearchTrace, TestCase};
use crate::vspace::{run_campaign, windowed_version_space, CampaignConfig, DriftMeasures, History, VersionSpaceModel};

#[derive(Debug, Parser)]
#[command(name = "refine-search", version, about = "Search strategies for multi-turn code correction")]
pub struct Cli {
    /// Seed for every randomized step; overrides the spec file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; overrides the spec file and REFINE_SEARCH_JOBS.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Print failures as a JSON object on stdout.
    #[arg(long, global = true)]
    pub error_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment spec and write traces and curves.
    Run {
        #[arg(long)]
        spec: PathBuf,
    },
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    #[command(subcommand)]
    Vspace(VspaceCommand),
    /// Fill in hidden verdicts for existing traces.
    Eval {
        /// Spec whose dataset and sandbox are used.
        #[arg(long)]
        spec: PathBuf,
        /// Trace files; defaults to the spec's trace directory.
        traces: Vec<PathBuf>,
    },
    /// Check the backend and sandbox of a spec and show the effective config.
    Doctor {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Depth distributions per strategy label.
    Depth {
        traces: Vec<PathBuf>,
        /// Emit at least this many depth columns.
        #[arg(long, default_value_t = 0)]
        min_columns: u32,
    },
    /// Direction similarity matrices under both groupings.
    Diversity(DiversityArgs),
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    pub traces: Vec<PathBuf>,
    /// JSONL file of {text_hash, vector}.
    #[arg(long, conflicts_with = "endpoint")]
    pub embeddings: Option<PathBuf>,
    /// OpenAI-compatible embeddings URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the endpoint's bearer token.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long, default_value = "diversity")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum VspaceCommand {
    /// Check the safety, discrimination and drift results on random models.
    Campaign {
        #[arg(long, default_value_t = 200)]
        seeds: u32,
        #[arg(long, default_value_t = 5)]
        max_size: usize,
        #[arg(long, default_value_t = 4)]
        max_history_len: usize,
    },
    /// The two-code instance whose version space empties, and a w_max example.
    Demo,
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run(&cli, &mut std::io::stdout())
}

/// Runs a parsed command, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> i32 {
    match dispatch(cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            if cli.error_json {
                let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
                let _ = writeln!(out, "{}", json!({ "error": e.to_string(), "causes": chain }));
            } else {
                eprintln!("error: {e:#}");
            }
            1
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn std::io::Write) -> Result<bool> {
    match &cli.command {
        Command::Run { spec } => cmd_run(cli, spec, out),
        Command::Analyze(AnalyzeCommand::Depth { traces, min_columns }) => {
            let traces = load_paths(traces)?;
            let csv = depth_tables_csv(&traces, *min_columns)?;
            emit_csv(cli.format, &csv, out)?;
            Ok(true)
        }
        Command::Analyze(AnalyzeCommand::Diversity(args)) => cmd_diversity(cli, args, out),
        Command::Vspace(VspaceCommand::Campaign {
            seeds,
            max_size,
            max_history_len,
        }) => {
            let config = CampaignConfig {
                seeds: *seeds,
                base_seed: cli.seed.unwrap_or(0),
                max_size: *max_size,
                max_history_len: *max_history_len,
                ..CampaignConfig::default()
            };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(resolve_jobs(cli.jobs)).build()?;
            let report = pool.install(|| run_campaign(&config));
            let header = ["result", "models", "skipped", "checks", "violations", "status"];
            let rows: Vec<Vec<String>> = report
                .rows()
                .into_iter()
                .map(|(name, t)| {
                    vec![
                        name.to_string(),
                        t.models.to_string(),
                        t.skipped.to_string(),
                        t.checks.to_string(),
                        t.violations.to_string(),
                        if t.holds() { "ok" } else { "FAILED" }.to_string(),
                    ]
                })
                .collect();
            emit(cli.format, serde_json::to_value(&report)?, &header, &rows, out)?;
            Ok(report.holds())
        }
        Command::Vspace(VspaceCommand::Demo) => {
            let lines = vspace_demo()?;
            match cli.format {
                Format::Json => writeln!(out, "{}", json!({ "lines": lines }))?,
                _ => {
                    for l in lines {
                        writeln!(out, "{l}")?;
                    }
                }
            }
            Ok(true)
        }
        Command::Eval { spec, traces } => cmd_eval(cli, spec, traces, out),
        Command::Doctor { spec } => cmd_doctor(cli, spec.as_deref(), out),
    }
}

fn load_spec(cli: &Cli, path: &Path) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        spec.base_seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        spec.parallelism = jobs;
    }
    Ok(spec)
}

fn load_paths(paths: &[PathBuf]) -> Result<Vec<SearchTrace>> {
    if paths.is_empty() {
        bail!("no trace files given");
    }
    let mut traces = Vec::new();
    for p in paths {
        if p.is_dir() {
            traces.extend(load_traces(p)?);
        } else {
            traces.push(SearchTrace::load(p)?);
        }
    }
    Ok(traces)
}

fn cmd_run(cli: &Cli, path: &Path, out: &mut dyn std::io::Write) -> Result<bool> {
    let spec = load_spec(cli, path)?;
    let outcome = run_experiment(&spec)?;
    let s = &outcome.summary;
    let mut rows = Vec::new();
    for curve in &s.curves {
        for p in &curve.points {
            let half = p.ci_half_width.map(|h| format!("{h:.4}")).unwrap_or_default();
            rows.push(vec![curve.label.clone(), p.j.to_string(), format!("{:.4}", p.mean), half]);
        }
    }
    emit(cli.format, serde_json::to_value(s)?, &["label", "j", "mean", "ci_half_width"], &rows, out)?;
    if cli.format == Format::Table {
        writeln!(
            out,
            "computed {} traces, reused {}, {} failed; output in {}",
            s.computed,
            s.reused,
            s.failures.len(),
            spec.output_dir.display()
        )?;
    }
    Ok(s.failures.is_empty())
}

fn cmd_diversity(cli: &Cli, args: &DiversityArgs, out: &mut dyn std::io::Write) -> Result<bool> {
    let traces = load_paths(&args.traces)?;
    let source = match (&args.embeddings, &args.endpoint) {
        (Some(path), None) => EmbeddingSource::Jsonl { path: path.clone() },
        (None, Some(url)) => EmbeddingSource::Http {
            url: url.clone(),
            model: args.model.clone(),
            api_key_env: args.api_key_env.clone(),
        },
        _ => bail!("give exactly one of --embeddings or --endpoint"),
    };
    let embeddings = embed_directions(&traces, &source)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut written = Vec::new();
    for grouping in Grouping::ALL {
        let steps = group_embeddings(&traces, &embeddings, grouping)?;
        let matrix = diversity_matrix_sparse(&steps)?;
        let path = args.out_dir.join(format!("diversity.{}.csv", grouping.as_str()));
        std::fs::write(&path, matrix.to_csv(grouping.describe()))?;
        written.push(vec![grouping.as_str().to_string(), steps.len().to_string(), path.display().to_string()]);
        if args.svg {
            let svg = args.out_dir.join(format!("diversity.{}.svg", grouping.as_str()));
            std::fs::write(&svg, matrix.to_svg(grouping.describe()))?;
        }
    }
    let value = json!(written
        .iter()
        .map(|r| json!({ "grouping": r[0], "steps": r[1].parse::<usize>().unwrap_or(0), "path": r[2] }))
        .collect::<Vec<_>>());
    emit(cli.format, value, &["grouping", "steps", "path"], &written, out)?;
    Ok(true)
}

fn cmd_eval(cli: &Cli, spec_path: &Path, paths: &[PathBuf], out: &mut dyn std::io::Write) -> Result<bool> {
    let spec = load_spec(cli, spec_path)?;
    let tasks = crate::dataset::load_tasks(&spec.dataset, spec.dataset_format)?;
    let executor = spec.build_executor();
    let files: Vec<PathBuf> = if paths.is_empty() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(spec.traces_dir())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".trace.json"))
            .collect();
        v.sort();
        v
    } else {
        paths.to_vec()
    };
    let mut rows = Vec::new();
    for path in &files {
        let mut trace = SearchTrace::load(path)?;
        let task = tasks
            .iter()
            .find(|t| t.task_id == trace.task_id)
            .with_context(|| format!("{}: task {} not in dataset", path.display(), trace.task_id))?;
        let filled = materialize_verdicts(&mut trace, task, executor.as_ref(), spec.timeout_ms)?;
        if filled > 0 {
            std::fs::write(path, trace.to_json())?;
        }
        rows.push(vec![path.display().to_string(), filled.to_string()]);
    }
    let value = json!(rows.iter().map(|r| json!({ "path": r[0], "filled": r[1] })).collect::<Vec<_>>());
    emit(cli.format, value, &["trace", "verdicts_filled"], &rows, out)?;
    Ok(true)
}

fn cmd_doctor(cli: &Cli, spec_path: Option<&Path>, out: &mut dyn std::io::Write) -> Result<bool> {
    let spec = spec_path.map(|p| load_spec(cli, p)).transpose()?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut healthy = true;
    let spec_jobs = spec.as_ref().map_or(0, |s| s.parallelism);
    let jobs_source = if cli.jobs.is_some() {
        "flag"
    } else if spec_jobs > 0 {
        "spec"
    } else if std::env::var(JOBS_ENV).is_ok() {
        "environment"
    } else {
        "default"
    };
    rows.push(vec!["precedence".into(), "flags > spec file > environment > defaults".into()]);
    rows.push(vec!["jobs".into(), format!("{} ({jobs_source})", resolve_jobs(cli.jobs.or(Some(spec_jobs))))]);
    let seed_source = if cli.seed.is_some() { "flag" } else if spec.is_some() { "spec" } else { "default" };
    rows.push(vec![
        "seed".into(),
        format!("{} ({seed_source})", cli.seed.or(spec.as_ref().map(|s| s.base_seed)).unwrap_or(0)),
    ]);
    if let Some(spec) = &spec {
        match spec.build_gateway() {
            Ok(gw) => {
                let status = if gw.backend_name() == "http" {
                    let mut session = gw.session("doctor", "doctor");
                    match session.complete(Role::InitCode, vec![Message::system("You are a health check."), Message::user("Reply with OK.")]) {
                        Ok(_) => "ok".to_string(),
                        Err(e) => {
                            healthy = false;
                            format!("FAILED: {e}")
                        }
                    }
                } else {
                    "ok (script loaded)".to_string()
                };
                rows.push(vec![format!("backend {}", gw.backend_name()), status]);
            }
            Err(e) => {
                healthy = false;
                rows.push(vec!["backend".into(), format!("FAILED: {e}")]);
            }
        }
        let executor = spec.build_executor();
        let probe = [TestCase::assertion("probe", "assert f() == 1")];
        let kind = match &spec.sandbox {
            SandboxSpec::Marker => "marker",
            SandboxSpec::Runner(_) => "runner",
        };
        let code = "def f():\n    return 1\n# passes: *\n";
        let status = match evaluate(executor.as_ref(), code, &probe, spec.timeout_ms, None) {
            Ok(r) if r.per_test.iter().all(|o| o.status == TestStatus::Pass) => "ok".to_string(),
            Ok(r) => {
                healthy = false;
                format!("FAILED: probe returned {:?}", r.per_test.first().map(|o| o.status))
            }
            Err(e) => {
                healthy = false;
                format!("FAILED: {e}")
            }
        };
        rows.push(vec![format!("sandbox {kind}"), status]);
        rows.push(vec!["dataset".into(), spec.dataset.display().to_string()]);
        rows.push(vec!["output_dir".into(), spec.output_dir.display().to_string()]);
    }
    let value = Value::Object(rows.iter().map(|r| (r[0].clone(), Value::String(r[1].clone()))).collect());
    emit(cli.format, value, &["check", "value"], &rows, out)?;
    Ok(healthy)
}

/// Text of the `vspace demo` report.
pub fn vspace_demo() -> Result<Vec<String>> {
    let m = VersionSpaceModel::drifting_pair();
    let names = |s| format_set(&m.direction_names(s));
    let h = History::new(&m, [(0, 0), (1, 0)])?;
    let mut lines = vec![
        format!("D_c0(e) = {}", names(m.consistent_directions(0, 0)?)),
        format!("D_c1(e) = {}", names(m.consistent_directions(1, 0)?)),
        format!("Ṽ_1 = {}", names(m.fold(&h.steps()[..1]))),
        format!("Ṽ_2 = {}", names(m.version_space(&h)?)),
        format!("Ṽ_2^(1) = {}", names(windowed_version_space(&m, &h, 1)?)),
    ];
    let d = DriftMeasures::new(Ratio::new(1, 2), Ratio::new(1, 5), Ratio::new(1, 10));
    let w_max = d.w_max.map_or("∞".to_string(), |w| w.to_string());
    lines.push(format!("α = {}, δ = {}, ε = {}: w_max = {w_max}", d.alpha, d.delta_drift, d.epsilon));
    Ok(lines)
}

fn format_set(names: &[&str]) -> String {
    if names.is_empty() {
        "∅".to_string()
    } else {
        format!("{{{}}}", names.join(", "))
    }
}

fn emit(format: Format, value: Value, header: &[&str], rows: &[Vec<String>], out: &mut dyn std::io::Write) -> Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?,
        Format::Csv => {
            writeln!(out, "{}", header.join(","))?;
            for r in rows {
                writeln!(out, "{}", r.join(","))?;
            }
        }
        Format::Table => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for r in rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            writeln!(out, "{}", line(header.to_vec()))?;
            for r in rows {
                writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
            }
        }
    }
    Ok(())
}

fn emit_csv(format: Format, csv: &str, out: &mut dyn std::io::Write) -> Result<()> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    let value = json!(rows
        .iter()
        .map(|r| header.iter().zip(r).map(|(h, c)| (h.to_string(), json!(c))).collect::<serde_json::Map<_, _>>())
        .collect::<Vec<_>>());
    emit(format, value, &header, &rows, out)
}
