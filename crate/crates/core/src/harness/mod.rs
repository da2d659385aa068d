//! Experiment execution over tasks, strategies and runs, with Pass@k
//! aggregation into scaling curves.
//!
//! Traces are written to `<output>/traces/` as soon as they are evaluated,
//! and an existing trace file is loaded instead of recomputed, so an
//! interrupted experiment resumes where it stopped.

mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{confidence_interval, pass_at_k, t_critical_975};

use crate::dataset::{load_tasks, DatasetError, DatasetFormat};
use crate::gateway::{Gateway, GatewayConfig, HttpBackend, HttpConfig, MockBackend, MockScript, PromptTemplates};
use crate::sandbox::{hidden_verdict, Executor, MarkerExecutor, RunnerConfig, RunnerPool, SandboxError};
use crate::strategies::{run_strategy, SearchEnv, StrategyConfig};
use crate::types::{trace_file_name, SearchTrace, Task, TestCase, TraceError};

/// Environment variable consulted for the worker count when neither a flag
/// nor the spec sets one.
pub const JOBS_ENV: &str = "REFINE_SEARCH_JOBS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unevaluated trace: task {task_id} node {node_id} has no hidden verdict")]
    UnevaluatedTrace { task_id: String, node_id: u32 },
    #[error("no tasks")]
    NoTasks,
    #[error("task {0} appears twice in one run")]
    DuplicateTask(String),
    #[error("confidence interval needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("unsupported confidence level {0}; only 0.95 is tabulated")]
    UnsupportedLevel(f64),
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("{failed} of {total} task runs failed, above the {limit:.0}% limit")]
    TooManyFailures { failed: usize, total: usize, limit: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Mock { script: PathBuf },
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SandboxSpec {
    /// Reads `# passes:` markers from the code instead of running it.
    Marker,
    Runner(RunnerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    #[serde(default)]
    pub dataset_format: DatasetFormat,
    pub strategies: Vec<StrategyConfig>,
    #[serde(default = "default_runs")]
    pub runs: u32,
    /// Run r uses seed `base_seed + r`.
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; 0 defers to the environment, then to the machine.
    #[serde(default)]
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub backend: BackendSpec,
    #[serde(default = "default_sandbox")]
    pub sandbox: SandboxSpec,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Size of the validation set generated once per task and run.
    #[serde(default = "default_validation_count")]
    pub validation_test_count: u32,
    #[serde(default = "default_max_failure_rate")]
    pub max_failure_rate: f64,
}

fn default_runs() -> u32 {
    5
}

fn default_sandbox() -> SandboxSpec {
    SandboxSpec::Marker
}

fn default_timeout_ms() -> u64 {
    5000
}

fn default_validation_count() -> u32 {
    6
}

fn default_max_failure_rate() -> f64 {
    0.1
}

impl ExperimentSpec {
    pub fn new(dataset: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, backend: BackendSpec) -> Self {
        Self {
            dataset: dataset.into(),
            dataset_format: DatasetFormat::Auto,
            strategies: Vec::new(),
            runs: default_runs(),
            base_seed: 0,
            parallelism: 0,
            output_dir: output_dir.into(),
            backend,
            sandbox: default_sandbox(),
            gateway: GatewayConfig::default(),
            templates_dir: None,
            timeout_ms: default_timeout_ms(),
            validation_test_count: default_validation_count(),
            max_failure_rate: default_max_failure_rate(),
        }
    }

    /// Parses a TOML spec and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let mut spec: Self = toml::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut spec.dataset);
        resolve(&mut spec.output_dir);
        if let Some(t) = spec.templates_dir.as_mut() {
            resolve(t);
        }
        if let BackendSpec::Mock { script } = &mut spec.backend {
            resolve(script);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.strategies.is_empty() {
            return bad("no strategies".into());
        }
        if self.validation_test_count == 0 || self.timeout_ms == 0 {
            return bad("validation_test_count and timeout_ms must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return bad("max_failure_rate must lie in [0, 1]".into());
        }
        let mut labels = BTreeMap::new();
        for s in &self.strategies {
            s.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
            if labels.insert(s.label(), ()).is_some() {
                return bad(format!("duplicate strategy label `{}`", s.label()));
            }
        }
        Ok(())
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|r| self.base_seed + r).collect()
    }

    pub fn traces_dir(&self) -> PathBuf {
        self.output_dir.join("traces")
    }

    pub fn build_gateway(&self) -> Result<Gateway, HarnessError> {
        let templates = match &self.templates_dir {
            Some(dir) => PromptTemplates::load_dir(dir).map_err(io_err(dir))?,
            None => PromptTemplates::default(),
        };
        let backend: Arc<dyn crate::gateway::Backend> = match &self.backend {
            BackendSpec::Mock { script } => Arc::new(MockBackend::new(MockScript::load(script).map_err(io_err(script))?)),
            BackendSpec::Http(cfg) => Arc::new(HttpBackend::new(cfg.clone()).map_err(|e| HarnessError::Spec(e.to_string()))?),
        };
        Ok(Gateway::new(backend, templates, self.gateway.clone()))
    }

    pub fn build_executor(&self) -> Box<dyn Executor> {
        match &self.sandbox {
            SandboxSpec::Marker => Box::new(MarkerExecutor),
            SandboxSpec::Runner(cfg) => Box::new(RunnerPool::new(cfg.clone())),
        }
    }
}

/// Worker count: explicit value, then [`JOBS_ENV`], then machine
/// parallelism capped at 8.
pub fn resolve_jobs(explicit: Option<usize>) -> usize {
    explicit
        .filter(|&j| j > 0)
        .or_else(|| std::env::var(JOBS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&j: &usize| j > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()).min(8))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub j: u32,
    pub mean: f64,
    /// `None` with a single run.
    pub ci_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub label: String,
    pub points: Vec<CurvePoint>,
    /// Pass@j per run, indexed [run][j - 1].
    pub per_run: Vec<Vec<f64>>,
    /// Tasks per run that entered the curve.
    pub tasks_per_run: Vec<usize>,
}

impl ScalingCurve {
    /// Curve for j = 1..=k from traces grouped by run.
    pub fn from_runs(label: impl Into<String>, runs: &[Vec<SearchTrace>], k: u32) -> Result<Self, HarnessError> {
        let mut per_run = Vec::with_capacity(runs.len());
        for traces in runs {
            let row = (1..=k)
                .map(|j| pass_at_k(traces, j).map(|r| *r.numer() as f64 / *r.denom() as f64))
                .collect::<Result<Vec<_>, _>>()?;
            per_run.push(row);
        }
        let points = (1..=k)
            .map(|j| {
                let values: Vec<f64> = per_run.iter().map(|r| r[j as usize - 1]).collect();
                let (mean, half) = match confidence_interval(&values, 0.95) {
                    Ok((m, h)) => (m, Some(h)),
                    Err(_) => (values.iter().sum::<f64>() / values.len().max(1) as f64, None),
                };
                CurvePoint {
                    j,
                    mean,
                    ci_half_width: half,
                }
            })
            .collect();
        Ok(Self {
            label: label.into(),
            points,
            per_run,
            tasks_per_run: runs.iter().map(Vec::len).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,mean,ci_half_width\n");
        for p in &self.points {
            let half = p.ci_half_width.map(|h| h.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", p.j, p.mean, half);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub label: String,
    pub run_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub tasks: usize,
    pub runs: u32,
    pub strategies: Vec<String>,
    pub computed: usize,
    pub reused: usize,
    pub failures: Vec<TaskFailure>,
    pub curves: Vec<ScalingCurve>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Successful traces keyed by label, then run seed.
    pub traces: BTreeMap<String, BTreeMap<u64, Vec<SearchTrace>>>,
    pub summary: ExperimentSummary,
}

/// Runs every (task, run, strategy) triple not already on disk, evaluates
/// hidden verdicts, writes curves and a summary.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    spec.validate()?;
    let tasks = load_tasks(&spec.dataset, spec.dataset_format)?;
    if tasks.is_empty() {
        return Err(HarnessError::NoTasks);
    }
    let gateway = spec.build_gateway()?;
    let executor = spec.build_executor();
    run_experiment_with(spec, &tasks, &gateway, executor.as_ref())
}

/// [`run_experiment`] with the tasks, gateway and executor supplied.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    tasks: &[Task],
    gateway: &Gateway,
    executor: &dyn Executor,
) -> Result<ExperimentOutcome, HarnessError> {
    spec.validate()?;
    let traces_dir = spec.traces_dir();
    let v_dir = spec.output_dir.join("validation");
    for dir in [&traces_dir, &v_dir] {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let env = SearchEnv {
        gateway,
        executor,
        timeout_ms: spec.timeout_ms,
    };
    let units: Vec<(&Task, u64)> = spec
        .run_seeds()
        .into_iter()
        .flat_map(|seed| tasks.iter().map(move |t| (t, seed)))
        .collect();
    let computed = AtomicUsize::new(0);
    let reused = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_jobs(Some(spec.parallelism)))
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;

    let results: Vec<Vec<Result<SearchTrace, TaskFailure>>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(task, seed)| {
                let fail = |label: String, error: String| TaskFailure {
                    task_id: task.task_id.clone(),
                    label,
                    run_seed: seed,
                    error,
                };
                let mut task_v = None;
                spec.strategies
                    .iter()
                    .map(|s| {
                        let label = s.label();
                        let path = traces_dir.join(trace_file_name(&task.task_id, &label, seed));
                        if path.exists() {
                            if let Ok(t) = SearchTrace::load(&path) {
                                if t.hidden_verdicts_complete() {
                                    reused.fetch_add(1, Ordering::Relaxed);
                                    return Ok(t);
                                }
                            }
                        }
                        if task_v.is_none() {
                            task_v = Some(shared_validation(spec, &v_dir, gateway, task, seed).map_err(|e| e.to_string()));
                        }
                        let task = match task_v.as_ref().unwrap() {
                            Ok(t) => t,
                            Err(e) => return Err(fail(label, format!("validation tests: {e}"))),
                        };
                        let config = s.clone().with_seed(seed);
                        let run = run_strategy(&env, task, &config).map_err(|e| fail(label.clone(), e.to_string()))?;
                        let mut trace = run.trace;
                        materialize_verdicts(&mut trace, task, executor, spec.timeout_ms)
                            .map_err(|e| fail(label.clone(), e.to_string()))?;
                        trace.save(&traces_dir).map_err(|e| fail(label, e.to_string()))?;
                        computed.fetch_add(1, Ordering::Relaxed);
                        Ok(trace)
                    })
                    .collect()
            })
            .collect()
    });

    let total = units.len() * spec.strategies.len();
    let mut failures = Vec::new();
    let mut traces: BTreeMap<String, BTreeMap<u64, Vec<SearchTrace>>> = BTreeMap::new();
    for s in &spec.strategies {
        let by_seed = traces.entry(s.label()).or_default();
        for seed in spec.run_seeds() {
            by_seed.entry(seed).or_default();
        }
    }
    for r in results.into_iter().flatten() {
        match r {
            Ok(t) => traces.get_mut(&t.label).unwrap().get_mut(&t.run_seed).unwrap().push(t),
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        log::warn!("{} of {total} task runs failed and are excluded from curves", failures.len());
        if failures.len() as f64 > spec.max_failure_rate * total as f64 {
            return Err(HarnessError::TooManyFailures {
                failed: failures.len(),
                total,
                limit: spec.max_failure_rate * 100.0,
            });
        }
    }
    failures.sort_by(|a, b| (&a.label, a.run_seed, &a.task_id).cmp(&(&b.label, b.run_seed, &b.task_id)));

    let mut curves = Vec::new();
    for s in &spec.strategies {
        let label = s.label();
        let by_seed = traces.get_mut(&label).unwrap();
        for v in by_seed.values_mut() {
            v.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        }
        let runs: Vec<Vec<SearchTrace>> = by_seed.values().filter(|v| !v.is_empty()).cloned().collect();
        if runs.is_empty() {
            continue;
        }
        let curve = ScalingCurve::from_runs(&label, &runs, s.budget_k)?;
        let path = spec.output_dir.join(format!("curve.{label}.csv"));
        std::fs::write(&path, curve.to_csv()).map_err(io_err(&path))?;
        curves.push(curve);
    }
    let summary = ExperimentSummary {
        tasks: tasks.len(),
        runs: spec.runs,
        strategies: spec.strategies.iter().map(StrategyConfig::label).collect(),
        computed: computed.into_inner(),
        reused: reused.into_inner(),
        failures,
        curves,
    };
    let path = spec.output_dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).map_err(io_err(&path))?;
    Ok(ExperimentOutcome { traces, summary })
}

/// The task with its validation set for run `seed`: the dataset's own set if
/// it has one, else the set stored under `dir`, else a freshly generated one
/// that is then stored, so every strategy of the run sees the same tests.
fn shared_validation(
    spec: &ExperimentSpec,
    dir: &Path,
    gateway: &Gateway,
    task: &Task,
    seed: u64,
) -> Result<Task, HarnessError> {
    let mut task = task.clone();
    if !task.validation_tests.is_empty() {
        return Ok(task);
    }
    let path = dir.join(trace_file_name(&task.task_id, "validation", seed).replace(".trace.json", ".json"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(tests) = serde_json::from_str::<Vec<TestCase>>(&text) {
            task.validation_tests = tests;
            return Ok(task);
        }
    }
    let mut session = gateway.session(&task.task_id, format!("validation/{seed}")).with_seed(seed);
    task.validation_tests = session
        .generate_validation_tests(&task, spec.validation_test_count as usize)
        .map_err(|e| HarnessError::Spec(e.to_string()))?;
    let json = serde_json::to_string_pretty(&task.validation_tests).expect("tests serialize");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    Ok(task)
}

/// Fills in every missing hidden verdict, running each distinct source once.
pub fn materialize_verdicts(
    trace: &mut SearchTrace,
    task: &Task,
    executor: &dyn Executor,
    timeout_ms: u64,
) -> Result<usize, SandboxError> {
    let mut cache: HashMap<String, bool> = trace
        .nodes
        .iter()
        .filter_map(|n| n.hidden_result.map(|v| (n.source.clone(), v)))
        .collect();
    let mut filled = 0;
    for node in trace.nodes.iter_mut().filter(|n| n.hidden_result.is_none()) {
        let v = match cache.get(&node.source) {
            Some(&v) => v,
            None => {
                let v = hidden_verdict(executor, &node.source, task, timeout_ms)?;
                cache.insert(node.source.clone(), v);
                v
            }
        };
        node.hidden_result = Some(v);
        filled += 1;
    }
    Ok(filled)
}

/// Loads every `*.trace.json` directly under `dir`, sorted by file name.
pub fn load_traces(dir: &Path) -> Result<Vec<SearchTrace>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".trace.json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| SearchTrace::load(p).map_err(HarnessError::from)).collect()
}
