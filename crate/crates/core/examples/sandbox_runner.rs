//! Executes candidate code through a pool of exec-runner processes speaking
//! the line-delimited JSON protocol. Uses the small Python runner from the
//! test fixtures.

use refine_search::sandbox::{evaluate, RunnerConfig, RunnerPool, TestStatus};
use refine_search::TestCase;

pub fn run_example() -> anyhow::Result<()> {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mini_runner.py");
    let pool = RunnerPool::new(RunnerConfig {
        command: vec!["python3".into(), script.into()],
        pool_size: 2,
        ..RunnerConfig::default()
    });
    let tests = [
        TestCase::assertion("t1", "assert double(2) == 4"),
        TestCase::assertion("t2", "assert double(-1) == -2"),
        TestCase::assertion("t3", "while True: pass"),
        TestCase::io_pair("t4", "", "8\n"),
    ];
    let code = "def double(x):\n    return 2 * x\nif __name__ == '__main__':\n    print(double(4))\n";
    let result = evaluate(&pool, code, &tests, 500, None)?;
    for o in &result.per_test {
        println!("{:<3} {:?} {}", o.test_id, o.status, o.detail.as_deref().unwrap_or(""));
    }
    let statuses: Vec<TestStatus> = result.per_test.iter().map(|o| o.status).collect();
    anyhow::ensure!(statuses == [TestStatus::Pass, TestStatus::Pass, TestStatus::Timeout, TestStatus::Pass]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
