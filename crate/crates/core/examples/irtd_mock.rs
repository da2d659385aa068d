//! Iterative refinement of textual directions against a scripted backend:
//! three initial codes, one direction per step, shared insights in between.

use refine_search::gateway::{Gateway, MockScript, Role};
use refine_search::sandbox::MarkerExecutor;
use refine_search::strategies::{run_strategy, SearchEnv, StrategyConfig};
use refine_search::{Task, TestCase};

pub fn run_example() -> anyhow::Result<()> {
    let script = MockScript::new()
        .with("*/gen_tests/*", "assert add(1, 2) == 3\nassert add(0, 0) == 0")
        .with("*/init_code/*", "```python\ndef add(a, b):\n    return a - b\n# passes: val-2\n```")
        .with("*/gen_directions/*", "1. Use + instead of -.\n2. Check the argument order.")
        .with("*/refine_code/*", "```python\ndef add(a, b):\n    return b - a\n# passes: val-2\n```")
        .with("add/refine_code/5", "```python\ndef add(a, b):\n    return a + b\n# passes: *\n```")
        .with("*/update_shared_info/*", "Subtraction is the wrong operator.");
    let gateway = Gateway::mock(script);
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let task = Task::new("add", "Write add(a, b).", vec![TestCase::assertion("h1", "assert add(2, 2) == 4")]);
    let run = run_strategy(&env, &task, &StrategyConfig::irtd(16, 3))?;
    for node in &run.trace.nodes {
        let dir = node.direction_used.as_ref().map_or("-", |d| d.text.as_str());
        println!(
            "node {:>2} parent {:>4} depth {} score {:.2}  {dir}",
            node.node_id,
            node.parent.map_or("root".into(), |p| p.to_string()),
            node.depth,
            node.validation_score
        );
    }
    println!("shared information entries: {}", run.shared_info.len());
    println!("direction batches: {}", run.calls.get(&Role::GenDirections).copied().unwrap_or(0));
    anyhow::ensure!(run.trace.terminated_early && run.trace.nodes.len() == 8);
    anyhow::ensure!(run.trace.nodes.iter().all(|n| n.depth <= 2));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
