//! Executing candidate code against test cases.
//!
//! The production executor is [`RunnerPool`], which talks to exec-runner
//! subprocesses over newline-delimited JSON. [`MarkerExecutor`] and
//! [`FnExecutor`] are deterministic stand-ins for scripted runs.

mod pool;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::FeedbackDetail;
use crate::types::{Task, TestCase};

pub use pool::{RunnerConfig, RunnerPool};

pub const DEFAULT_TIMEOUT_MS: u64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub request_id: String,
    pub code: String,
    pub tests: Vec<TestCase>,
    pub timeout_ms: u64,
    pub entry_point: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub status: TestStatus,
    #[serde(default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub request_id: String,
    pub per_test: Vec<TestOutcome>,
}

impl ExecResult {
    /// Every requested test marked with `status`; used when the runner
    /// cannot vouch for any individual result.
    pub fn uniform(request: &ExecRequest, status: TestStatus, detail: &str) -> Self {
        Self {
            request_id: request.request_id.clone(),
            per_test: request
                .tests
                .iter()
                .map(|t| TestOutcome {
                    test_id: t.test_id.clone(),
                    status,
                    detail: Some(detail.to_string()),
                })
                .collect(),
        }
    }

    /// True when the result covers exactly the requested test ids, in order.
    pub fn covers(&self, request: &ExecRequest) -> bool {
        self.request_id == request.request_id
            && self.per_test.len() == request.tests.len()
            && self.per_test.iter().zip(&request.tests).all(|(o, t)| o.test_id == t.test_id)
    }

    pub fn passed(&self) -> usize {
        self.per_test.iter().filter(|o| o.status == TestStatus::Pass).count()
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    Unavailable(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait Executor: Send + Sync {
    fn execute(&self, request: &ExecRequest) -> Result<ExecResult, SandboxError>;
}

static REQUEST_COUNTER: AtomicU64 = AtomicU64::new(1);

fn next_request_id() -> String {
    format!("req-{}", REQUEST_COUNTER.fetch_add(1, Ordering::Relaxed))
}

/// Runs `code` against `tests`, one status per test in request order.
pub fn evaluate(
    executor: &dyn Executor,
    code: &str,
    tests: &[TestCase],
    timeout_ms: u64,
    entry_point: Option<&str>,
) -> Result<ExecResult, SandboxError> {
    if tests.is_empty() {
        return Err(SandboxError::InvalidRequest("no tests".into()));
    }
    if timeout_ms == 0 {
        return Err(SandboxError::InvalidRequest("timeout_ms must be positive".into()));
    }
    let request = ExecRequest {
        request_id: next_request_id(),
        code: code.to_string(),
        tests: tests.to_vec(),
        timeout_ms,
        entry_point: entry_point.map(str::to_string),
    };
    let result = executor.execute(&request)?;
    if result.covers(&request) {
        Ok(result)
    } else {
        log::warn!("executor returned a result not matching {}; marking all tests as errors", request.request_id);
        Ok(ExecResult::uniform(&request, TestStatus::Error, "malformed executor response"))
    }
}

/// Fraction of tests passed; 0 for an empty result.
pub fn validation_score(result: &ExecResult) -> f64 {
    if result.per_test.is_empty() {
        return 0.0;
    }
    result.passed() as f64 / result.per_test.len() as f64
}

pub fn hidden_verdict(executor: &dyn Executor, code: &str, task: &Task, timeout_ms: u64) -> Result<bool, SandboxError> {
    let result = evaluate(executor, code, &task.hidden_tests, timeout_ms, task.entry_point.as_deref())?;
    Ok(result.per_test.iter().all(|o| o.status == TestStatus::Pass))
}

/// Test feedback as shown to direction-generating prompts.
pub fn render_feedback(result: &ExecResult, tests: &[TestCase], detail: FeedbackDetail) -> String {
    let total = result.per_test.len();
    let mut out = format!("Passed {}/{} validation tests.", result.passed(), total);
    if detail == FeedbackDetail::Failures {
        for outcome in result.per_test.iter().filter(|o| o.status != TestStatus::Pass) {
            let payload = tests
                .iter()
                .find(|t| t.test_id == outcome.test_id)
                .map(|t| t.payload.as_str())
                .unwrap_or("");
            let status = match outcome.status {
                TestStatus::Fail => "failed",
                TestStatus::Error => "raised an error",
                TestStatus::Timeout => "timed out",
                TestStatus::Pass => unreachable!(),
            };
            out.push_str(&format!("\n- `{}` {status}", payload.trim()));
            if let Some(d) = outcome.detail.as_deref().filter(|d| !d.is_empty()) {
                out.push_str(&format!(": {}", d.trim()));
            }
        }
    }
    out
}

/// Decides statuses from comment markers in the code itself:
/// `# passes: <patterns>`, `# errors: <patterns>`, `# timeouts: <patterns>`,
/// where a pattern is `*`, an exact test id, or a `prefix*`. Unmatched tests fail.
#[derive(Debug, Clone, Copy, Default)]
pub struct MarkerExecutor;

fn marker_matches(code: &str, marker: &str, test_id: &str) -> bool {
    code.lines()
        .filter_map(|l| l.trim().strip_prefix('#').map(str::trim))
        .filter_map(|l| l.strip_prefix(marker))
        .flat_map(|rest| rest.split(','))
        .map(str::trim)
        .any(|pat| match pat.strip_suffix('*') {
            Some(prefix) => test_id.starts_with(prefix),
            None => pat == test_id,
        })
}

impl MarkerExecutor {
    pub fn status(code: &str, test_id: &str) -> TestStatus {
        if marker_matches(code, "timeouts:", test_id) {
            TestStatus::Timeout
        } else if marker_matches(code, "errors:", test_id) {
            TestStatus::Error
        } else if marker_matches(code, "passes:", test_id) {
            TestStatus::Pass
        } else {
            TestStatus::Fail
        }
    }
}

impl Executor for MarkerExecutor {
    fn execute(&self, request: &ExecRequest) -> Result<ExecResult, SandboxError> {
        Ok(ExecResult {
            request_id: request.request_id.clone(),
            per_test: request
                .tests
                .iter()
                .map(|t| TestOutcome {
                    test_id: t.test_id.clone(),
                    status: Self::status(&request.code, &t.test_id),
                    detail: None,
                })
                .collect(),
        })
    }
}

/// Executor backed by a closure over `(code, test)`.
pub struct FnExecutor<F>(pub F);

impl<F> Executor for FnExecutor<F>
where
    F: Fn(&str, &TestCase) -> TestStatus + Send + Sync,
{
    fn execute(&self, request: &ExecRequest) -> Result<ExecResult, SandboxError> {
        Ok(ExecResult {
            request_id: request.request_id.clone(),
            per_test: request
                .tests
                .iter()
                .map(|t| TestOutcome {
                    test_id: t.test_id.clone(),
                    status: (self.0)(&request.code, t),
                    detail: None,
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcomes(statuses: &[TestStatus]) -> ExecResult {
        ExecResult {
            request_id: "r".into(),
            per_test: statuses
                .iter()
                .enumerate()
                .map(|(i, s)| TestOutcome {
                    test_id: format!("t{i}"),
                    status: *s,
                    detail: None,
                })
                .collect(),
        }
    }

    #[test]
    fn score_examples() {
        use TestStatus::*;
        assert_eq!(validation_score(&outcomes(&[Pass, Pass, Pass])), 1.0);
        assert_eq!(validation_score(&outcomes(&[Fail, Error, Timeout, Fail])), 0.0);
        assert!((validation_score(&outcomes(&[Pass, Fail, Pass, Fail, Fail])) - 0.4).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn adding_a_pass_follows_exact_formula(statuses in proptest::collection::vec(0u8..4, 1..20)) {
            let map = |s: &u8| match s { 0 => TestStatus::Pass, 1 => TestStatus::Fail, 2 => TestStatus::Error, _ => TestStatus::Timeout };
            let base: Vec<_> = statuses.iter().map(map).collect();
            let n = base.len() as f64;
            let before = validation_score(&outcomes(&base));
            let mut more = base.clone();
            more.push(TestStatus::Pass);
            let after = validation_score(&outcomes(&more));
            let passes = base.iter().filter(|s| **s == TestStatus::Pass).count() as f64;
            prop_assert!((after - (passes + 1.0) / (n + 1.0)).abs() < 1e-12);
            prop_assert!(after >= before * n / (n + 1.0) - 1e-12);
        }
    }

    #[test]
    fn hidden_verdict_quantifies_over_all_tests() {
        let task = Task::new(
            "t",
            "p",
            vec![
                TestCase::assertion("h1", "a"),
                TestCase::assertion("h2", "b"),
                TestCase::assertion("h3", "c"),
            ],
        );
        assert!(hidden_verdict(&MarkerExecutor, "# passes: *", &task, 1000).unwrap());
        assert!(!hidden_verdict(&MarkerExecutor, "# passes: h1, h3", &task, 1000).unwrap());
        assert!(!hidden_verdict(&MarkerExecutor, "# passes: *\n# timeouts: h2", &task, 1000).unwrap());
    }

    #[test]
    fn markers() {
        let code = "def f(): pass\n# passes: val-*, h2\n# errors: h9";
        assert_eq!(MarkerExecutor::status(code, "val-3"), TestStatus::Pass);
        assert_eq!(MarkerExecutor::status(code, "h2"), TestStatus::Pass);
        assert_eq!(MarkerExecutor::status(code, "h1"), TestStatus::Fail);
        assert_eq!(MarkerExecutor::status(code, "h9"), TestStatus::Error);
    }

    struct Liar;
    impl Executor for Liar {
        fn execute(&self, request: &ExecRequest) -> Result<ExecResult, SandboxError> {
            // claims success but drops a test
            let mut r = ExecResult::uniform(request, TestStatus::Pass, "");
            r.per_test.pop();
            Ok(r)
        }
    }

    #[test]
    fn mismatched_response_never_passes() {
        let tests = vec![TestCase::assertion("a", "x"), TestCase::assertion("b", "y")];
        let r = evaluate(&Liar, "code", &tests, 100, None).unwrap();
        assert_eq!(r.per_test.len(), 2);
        assert!(r.per_test.iter().all(|o| o.status == TestStatus::Error));
    }

    #[test]
    fn evaluate_rejects_empty_tests() {
        assert!(matches!(evaluate(&MarkerExecutor, "c", &[], 100, None), Err(SandboxError::InvalidRequest(_))));
    }

    #[test]
    fn feedback_rendering() {
        let tests = vec![TestCase::assertion("a", "assert f(1)==1"), TestCase::assertion("b", "assert f(2)==4")];
        let r = evaluate(&MarkerExecutor, "# passes: a", &tests, 100, None).unwrap();
        assert_eq!(render_feedback(&r, &tests, FeedbackDetail::Counts), "Passed 1/2 validation tests.");
        let detailed = render_feedback(&r, &tests, FeedbackDetail::Failures);
        assert!(detailed.contains("assert f(2)==4` failed"));
    }
}
