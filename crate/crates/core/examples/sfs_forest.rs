//! Scattered forest search with and without diversified initial codes, on a
//! script where the second initial code leads to the fix.

use refine_search::gateway::{Gateway, MockScript};
use refine_search::sandbox::MarkerExecutor;
use refine_search::strategies::{run_strategy, SearchEnv, StrategyConfig};
use refine_search::{max_depth, Task, TestCase};

pub fn run_example() -> anyhow::Result<()> {
    let script = MockScript::new()
        .with("*/gen_tests/*", "assert f([]) == 0\nassert f([1, 2]) == 3\nassert f([5]) == 5")
        .with("*/init_code/*", "```python\ndef f(xs):\n    return 0\n# passes: val-1\n```")
        .with("*/init_code/2", "```python\ndef f(xs):\n    return xs[0]\n# passes: val-3\n# passes: val-1\n```")
        .with("*/gen_directions/*", "1. Sum every element.\n2. Handle the empty list.\n3. Avoid indexing.")
        .with("*/refine_code/*", "```python\ndef f(xs):\n    return len(xs)\n```")
        .with("*/refine_code/3", "```python\ndef f(xs):\n    return sum(xs)\n# passes: *\n```")
        .with("*/update_shared_info/*", "Partial progress.")
        .with("*/scout_insight/*", "Summation is the core of the task.");
    let gateway = Gateway::mock(script);
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let task = Task::new("sum", "Return the sum of a list.", vec![TestCase::assertion("h1", "assert f([3, 4]) == 7")]);
    for config in [StrategyConfig::sfs(16), StrategyConfig::no_foresting(16)] {
        let run = run_strategy(&env, &task, &config)?;
        let parents: Vec<String> = run.trace.nodes.iter().map(|n| n.parent.map_or("-".into(), |p| p.to_string())).collect();
        println!(
            "{:<17} nodes {:>2}  max depth {}  solved {}  parents [{}]",
            config.label(),
            run.trace.nodes.len(),
            max_depth(&run.trace)?,
            run.trace.terminated_early,
            parents.join(" ")
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
