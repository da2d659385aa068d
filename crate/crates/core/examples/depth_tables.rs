//! Depth-distribution tables from scripted SFS and IRTD runs.

use refine_search::analysis::{depth_tables_csv, first_correct_depth_table};
use refine_search::gateway::{Gateway, MockScript};
use refine_search::harness::{run_experiment_with, BackendSpec, ExperimentSpec};
use refine_search::sandbox::MarkerExecutor;
use refine_search::strategies::StrategyConfig;
use refine_search::{SearchTrace, Task, TestCase};

const PASS: &str = "```python\ndef f(s):\n    return s[::-1]\n# passes: *\n```";

pub fn run_example() -> anyhow::Result<()> {
    let tasks: Vec<Task> = (0..12)
        .map(|i| Task::new(format!("rev-{i:02}"), "Reverse a string.", vec![TestCase::assertion("h1", "assert f('ab') == 'ba'")]))
        .collect();
    // most tasks are solved by an initial code, a few need one refinement
    let mut script = MockScript::new()
        .with("*/gen_tests/*", "assert f('') == ''\nassert f('abc') == 'cba'")
        .with("*/init_code/*", "```python\ndef f(s):\n    return s\n# passes: val-1\n```")
        .with("*/gen_directions/*", "1. Slice with a negative step.\n2. Join reversed characters.")
        .with("*/refine_code/*", "```python\ndef f(s):\n    return s.upper()\n```")
        .with("*/update_shared_info/*", "Identity is not enough.")
        .with("*/scout_insight/*", "Order matters.");
    for i in 0..12 {
        let key = if i % 4 == 3 { format!("rev-{i:02}/refine_code/1") } else { format!("rev-{i:02}/init_code/{}", i % 4 + 1) };
        script = script.with(key, PASS);
    }
    let dir = std::env::temp_dir().join(format!("refine-search-depth-{}", std::process::id()));
    let mut spec = ExperimentSpec::new("unused.jsonl", &dir, BackendSpec::Mock { script: "unused.json".into() });
    spec.strategies = vec![StrategyConfig::sfs(16), StrategyConfig::irtd(16, 3)];
    spec.runs = 1;
    let outcome = run_experiment_with(&spec, &tasks, &Gateway::mock(script), &MarkerExecutor)?;
    let traces: Vec<SearchTrace> = outcome.traces.values().flat_map(|r| r.values().flatten().cloned()).collect();
    print!("{}", depth_tables_csv(&traces, 3)?);
    let sfs = first_correct_depth_table(&outcome.traces["sfs"][&0])?;
    anyhow::ensure!(sfs.percentage(1) >= sfs.percentage(2));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
