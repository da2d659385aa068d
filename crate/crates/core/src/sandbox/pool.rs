use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ExecRequest, ExecResult, Executor, SandboxError, TestStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    /// Program and arguments that launch one exec-runner.
    pub command: Vec<String>,
    pub pool_size: usize,
    /// Slack on top of the per-test timeouts before a runner is presumed hung.
    pub grace_ms: u64,
    pub startup_timeout_ms: u64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            command: vec!["exec-runner".into()],
            pool_size: 2,
            grace_ms: 2000,
            startup_timeout_ms: 10_000,
        }
    }
}

struct Runner {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Runner {
    fn spawn(config: &RunnerConfig) -> Result<Self, SandboxError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| SandboxError::Unavailable("empty runner command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SandboxError::Unavailable(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let runner = Runner { child, stdin, lines };
        let ready = runner
            .lines
            .recv_timeout(Duration::from_millis(config.startup_timeout_ms))
            .map_err(|_| SandboxError::Unavailable("runner did not signal readiness".into()))?;
        let ok = serde_json::from_str::<serde_json::Value>(&ready)
            .ok()
            .and_then(|v| v.get("ready").and_then(|r| r.as_bool()))
            .unwrap_or(false);
        if !ok {
            return Err(SandboxError::Unavailable(format!("unexpected handshake line: {ready}")));
        }
        Ok(runner)
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.write_all(b"\n")?;
        self.stdin.flush()
    }
}

impl Drop for Runner {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct PoolState {
    idle: Vec<Runner>,
    live: usize,
}

/// A bounded pool of exec-runner subprocesses, spawned lazily and replaced
/// when they crash or hang.
pub struct RunnerPool {
    config: RunnerConfig,
    state: Mutex<PoolState>,
    freed: Condvar,
}

enum Outcome {
    Done(ExecResult),
    /// The runner died before accepting the request.
    Rejected,
}

impl RunnerPool {
    pub fn new(config: RunnerConfig) -> Self {
        Self {
            config,
            state: Mutex::new(PoolState { idle: Vec::new(), live: 0 }),
            freed: Condvar::new(),
        }
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.config
    }

    fn checkout(&self) -> Result<Runner, SandboxError> {
        let mut state = self.state.lock().unwrap();
        loop {
            if let Some(r) = state.idle.pop() {
                return Ok(r);
            }
            if state.live < self.config.pool_size.max(1) {
                state.live += 1;
                drop(state);
                return Runner::spawn(&self.config).inspect_err(|_| {
                    self.discard();
                });
            }
            state = self.freed.wait(state).unwrap();
        }
    }

    fn checkin(&self, runner: Runner) {
        self.state.lock().unwrap().idle.push(runner);
        self.freed.notify_one();
    }

    fn discard(&self) {
        self.state.lock().unwrap().live -= 1;
        self.freed.notify_one();
    }

    fn attempt(&self, mut runner: Runner, request: &ExecRequest, line: &str) -> Outcome {
        if runner.send(line).is_err() {
            drop(runner);
            self.discard();
            return Outcome::Rejected;
        }
        let deadline = request.timeout_ms * request.tests.len().max(1) as u64 + self.config.grace_ms;
        match runner.lines.recv_timeout(Duration::from_millis(deadline)) {
            Ok(resp) => {
                self.checkin(runner);
                match serde_json::from_str::<ExecResult>(&resp) {
                    Ok(result) if result.covers(request) => Outcome::Done(result),
                    _ => Outcome::Done(ExecResult::uniform(request, TestStatus::Error, "malformed runner response")),
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                drop(runner);
                self.discard();
                Outcome::Done(ExecResult::uniform(request, TestStatus::Timeout, "runner deadline exceeded"))
            }
            Err(RecvTimeoutError::Disconnected) => {
                drop(runner);
                self.discard();
                Outcome::Done(ExecResult::uniform(request, TestStatus::Error, "runner crashed"))
            }
        }
    }
}

impl Executor for RunnerPool {
    fn execute(&self, request: &ExecRequest) -> Result<ExecResult, SandboxError> {
        let line = serde_json::to_string(request).map_err(|e| SandboxError::InvalidRequest(e.to_string()))?;
        // one restart if the runner we got turns out to be dead
        for _ in 0..2 {
            let runner = match self.checkout() {
                Ok(r) => r,
                Err(_) => self.checkout()?,
            };
            if let Outcome::Done(result) = self.attempt(runner, request, &line) {
                return Ok(result);
            }
        }
        Err(SandboxError::Unavailable("runner rejected request after restart".into()))
    }
}
