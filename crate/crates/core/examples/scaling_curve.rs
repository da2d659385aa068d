//! Pass@j curves over a ten-task scripted dataset, two runs per strategy,
//! with traces, curve CSVs and a summary written to a temporary directory.

use refine_search::gateway::{Gateway, MockScript};
use refine_search::harness::{run_experiment_with, BackendSpec, ExperimentSpec};
use refine_search::sandbox::MarkerExecutor;
use refine_search::strategies::StrategyConfig;
use refine_search::{Task, TestCase};

const PASS: &str = "```python\ndef f(x):\n    return x\n# passes: *\n```";

pub fn run_example() -> anyhow::Result<()> {
    let tasks: Vec<Task> = (0..10)
        .map(|i| Task::new(format!("task-{i}"), "Return x.", vec![TestCase::assertion("h1", "assert f(4) == 4")]))
        .collect();
    // best-of-n solves task i at its (2i+1)-th sample; tasks 8 and 9 never
    let mut script = MockScript::new()
        .with("*/gen_tests/*", "assert f(1) == 1")
        .with("*/init_code/*", "```python\ndef f(x):\n    return 0\n```")
        .with("*/gen_directions/*", "1. Return the argument.\n2. Remove the constant.")
        .with("*/refine_code/*", "```python\ndef f(x):\n    return -x\n```")
        .with("*/update_shared_info/*", "No change.")
        .with("*/scout_insight/*", "The output mirrors the input.");
    for i in 0..8 {
        script = script.with(format!("task-{i}/init_code/{}", 2 * i + 1), PASS);
    }
    let gateway = Gateway::mock(script);
    let dir = std::env::temp_dir().join(format!("refine-search-scaling-{}", std::process::id()));
    let mut spec = ExperimentSpec::new("unused.jsonl", &dir, BackendSpec::Mock { script: "unused.json".into() });
    spec.strategies = vec![StrategyConfig::bon(16), StrategyConfig::linear(16)];
    spec.runs = 2;
    let outcome = run_experiment_with(&spec, &tasks, &gateway, &MarkerExecutor)?;
    for curve in &outcome.summary.curves {
        let means: Vec<String> = curve.points.iter().map(|p| format!("{:.1}", p.mean)).collect();
        println!("{:<7} {}", curve.label, means.join(" "));
        anyhow::ensure!(curve.points.windows(2).all(|w| w[0].mean <= w[1].mean), "curve not monotone");
    }
    let bon = &outcome.summary.curves[0];
    anyhow::ensure!(bon.points[0].mean == 0.1 && bon.points[15].mean == 0.8);
    let mut files: Vec<String> = std::fs::read_dir(&dir)?.filter_map(|e| e.ok()?.file_name().into_string().ok()).collect();
    files.sort();
    println!("outputs: {}", files.join(", "));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
