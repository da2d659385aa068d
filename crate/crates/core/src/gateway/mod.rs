//! Uniform access to language-model backends for the six generation roles.
//!
//! A [`Gateway`] is shared by all task runners. Each strategy run opens a
//! [`Session`], which numbers calls per role (the mock backend keys its
//! script on that number), applies the retry policy, and records how many
//! requests of each role were made.

mod http;
mod mock;
pub mod parse;
mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{SharedEntry, SharedInformation, Task, TestCase, TextualDirection};

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{MockBackend, MockScript};
pub use parse::{extract_code, parse_directions, parse_tests};
pub use templates::{PromptTemplates, Template};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    InitCode,
    GenTests,
    GenDirections,
    RefineCode,
    UpdateSharedInfo,
    ScoutInsight,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::InitCode,
        Role::GenTests,
        Role::GenDirections,
        Role::RefineCode,
        Role::UpdateSharedInfo,
        Role::ScoutInsight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::InitCode => "init_code",
            Role::GenTests => "gen_tests",
            Role::GenDirections => "gen_directions",
            Role::RefineCode => "refine_code",
            Role::UpdateSharedInfo => "update_shared_info",
            Role::ScoutInsight => "scout_insight",
        }
    }

    /// Only code generations count toward the budget k.
    pub fn is_code_generation(self) -> bool {
        matches!(self, Role::InitCode | Role::RefineCode)
    }

    fn is_creative(self) -> bool {
        matches!(self, Role::InitCode | Role::RefineCode | Role::GenDirections)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::System,
            text: text.into(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::User,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub task_id: String,
    pub role: Role,
    pub messages: Vec<Message>,
    pub params: SamplingParams,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("no messages".into())),
            Some(m) if m.speaker != Speaker::System => {
                Err(GatewayError::InvalidRequest("first message must be the system message".into()))
            }
            _ if self.params.temperature < 0.0 || self.params.max_tokens == 0 => {
                Err(GatewayError::InvalidRequest("invalid sampling params".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Identifies a call for backends that need it (the mock keys on it).
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub session: &'a str,
    pub task_id: &'a str,
    pub role: Role,
    /// 1-based count of requests of this role within the session.
    pub call_index: u32,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
    #[error("unscripted call: {0}")]
    Unscripted(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, ctx: &CallContext<'_>, request: &GenerationRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("unscripted call: {0}")]
    Unscripted(String),
    #[error("empty model response")]
    EmptyResponse,
    #[error("no directions parsed")]
    NoDirections { raw: String },
    #[error("no tests generated")]
    NoTests,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// How much test output a direction prompt sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackDetail {
    Counts,
    #[default]
    Failures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub retries: u32,
    /// Used for code and direction generation.
    pub creative_temperature: f64,
    /// Used for tests and shared-information summaries.
    pub precise_temperature: f64,
    pub max_tokens: u32,
    pub feedback_detail: FeedbackDetail,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            creative_temperature: 0.7,
            precise_temperature: 0.0,
            max_tokens: 2048,
            feedback_detail: FeedbackDetail::Failures,
        }
    }
}

impl GatewayConfig {
    /// All temperatures zero, as used with the mock backend.
    pub fn deterministic() -> Self {
        Self {
            creative_temperature: 0.0,
            ..Self::default()
        }
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    templates: PromptTemplates,
    config: GatewayConfig,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, templates: PromptTemplates, config: GatewayConfig) -> Self {
        Self {
            backend,
            templates,
            config,
        }
    }

    pub fn mock(script: MockScript) -> Self {
        Self::new(
            Arc::new(MockBackend::new(script)),
            PromptTemplates::default(),
            GatewayConfig::deterministic(),
        )
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Opens a call-numbering namespace for one strategy run.
    pub fn session(&self, task_id: &str, name: impl Into<String>) -> Session<'_> {
        Session {
            gateway: self,
            name: name.into(),
            task_id: task_id.to_string(),
            seed: None,
            calls: BTreeMap::new(),
            attempts: 0,
        }
    }
}

/// What a single refinement step did, for shared-information updates.
#[derive(Debug, Clone, Copy)]
pub struct RefinementOutcome<'a> {
    pub code: &'a str,
    pub direction: &'a TextualDirection,
    pub refined_code: &'a str,
    pub score_before: f64,
    pub score_after: f64,
}

pub struct Session<'g> {
    gateway: &'g Gateway,
    name: String,
    task_id: String,
    seed: Option<u64>,
    calls: BTreeMap<Role, u32>,
    attempts: u32,
}

impl<'g> Session<'g> {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn feedback_detail(&self) -> FeedbackDetail {
        self.gateway.config.feedback_detail
    }

    /// Logical requests issued for `role` so far.
    pub fn calls(&self, role: Role) -> u32 {
        self.calls.get(&role).copied().unwrap_or(0)
    }

    pub fn code_generations(&self) -> u32 {
        self.calls(Role::InitCode) + self.calls(Role::RefineCode)
    }

    /// Backend invocations including retries.
    pub fn backend_attempts(&self) -> u32 {
        self.attempts
    }

    /// Issues one logical request, retrying transient failures up to the
    /// configured limit.
    pub fn complete(&mut self, role: Role, messages: Vec<Message>) -> Result<String, GatewayError> {
        let cfg = &self.gateway.config;
        let request = GenerationRequest {
            task_id: self.task_id.clone(),
            role,
            messages,
            params: SamplingParams {
                temperature: if role.is_creative() {
                    cfg.creative_temperature
                } else {
                    cfg.precise_temperature
                },
                max_tokens: cfg.max_tokens,
                seed: self.seed,
            },
        };
        request.validate()?;

        let call_index = {
            let n = self.calls.entry(role).or_insert(0);
            *n += 1;
            *n
        };
        let ctx = CallContext {
            session: &self.name,
            task_id: &self.task_id,
            role,
            call_index,
        };
        let max_attempts = cfg.retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.attempts += 1;
            match self.gateway.backend.complete(&ctx, &request) {
                Ok(text) if text.trim().is_empty() => return Err(GatewayError::EmptyResponse),
                Ok(text) => return Ok(text),
                Err(BackendError::Transient(message)) => {
                    if attempt >= max_attempts {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    log::debug!("{}: retrying {role} after transient failure: {message}", self.name);
                }
                Err(BackendError::Fatal(message)) => return Err(GatewayError::Backend(message)),
                Err(BackendError::Unscripted(key)) => return Err(GatewayError::Unscripted(key)),
            }
        }
    }

    fn render(&self, role: Role, vars: &[(&str, &str)]) -> Vec<Message> {
        self.gateway.templates.render(role, vars)
    }

    pub fn generate_initial_code(
        &mut self,
        task: &Task,
        info: &SharedInformation,
        prompt_suffix: &str,
    ) -> Result<String, GatewayError> {
        let messages = self.render(
            Role::InitCode,
            &[("prompt", &task.prompt), ("shared_info", info.rendered()), ("suffix", prompt_suffix)],
        );
        Ok(extract_code(&self.complete(Role::InitCode, messages)?))
    }

    pub fn generate_initial_codes(
        &mut self,
        task: &Task,
        n: usize,
        info: &SharedInformation,
    ) -> Result<Vec<String>, GatewayError> {
        if n == 0 {
            return Err(GatewayError::InvalidRequest("n must be at least 1".into()));
        }
        (0..n).map(|_| self.generate_initial_code(task, info, "")).collect()
    }

    pub fn generate_directions(
        &mut self,
        task: &Task,
        code: &str,
        feedback: &str,
        info: &SharedInformation,
        m: usize,
    ) -> Result<Vec<TextualDirection>, GatewayError> {
        if m == 0 {
            return Err(GatewayError::InvalidRequest("m must be at least 1".into()));
        }
        let m_text = m.to_string();
        let shared = if info.is_empty() { "(none yet)" } else { info.rendered() };
        let messages = self.render(
            Role::GenDirections,
            &[
                ("prompt", &task.prompt),
                ("code", code),
                ("feedback", feedback),
                ("shared_info", shared),
                ("m", &m_text),
            ],
        );
        let raw = self.complete(Role::GenDirections, messages)?;
        let directions = parse_directions(&raw, m);
        if directions.is_empty() {
            return Err(GatewayError::NoDirections { raw });
        }
        Ok(directions)
    }

    pub fn refine_code(
        &mut self,
        task: &Task,
        code: &str,
        direction: &TextualDirection,
    ) -> Result<String, GatewayError> {
        if direction.text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty direction".into()));
        }
        let messages = self.render(
            Role::RefineCode,
            &[("prompt", &task.prompt), ("code", code), ("direction", &direction.text)],
        );
        let code = extract_code(&self.complete(Role::RefineCode, messages)?);
        if code.is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(code)
    }

    /// Appends one entry describing `outcome` and returns the new value.
    /// The summary is model-written; when the call fails a template summary
    /// is used so the run can continue.
    pub fn update_shared_info(
        &mut self,
        role: Role,
        task: &Task,
        info: &SharedInformation,
        outcome: RefinementOutcome<'_>,
    ) -> SharedInformation {
        debug_assert!(matches!(role, Role::UpdateSharedInfo | Role::ScoutInsight));
        let before = format!("{:.2}", outcome.score_before);
        let after = format!("{:.2}", outcome.score_after);
        let shared = if info.is_empty() { "(none yet)" } else { info.rendered() };
        let messages = self.render(
            role,
            &[
                ("prompt", &task.prompt),
                ("code", outcome.code),
                ("direction", &outcome.direction.text),
                ("refined_code", outcome.refined_code),
                ("score_before", &before),
                ("score_after", &after),
                ("shared_info", shared),
            ],
        );
        let summary = match self.complete(role, messages) {
            Ok(text) => text.trim().to_string(),
            Err(e) => {
                log::warn!("{}: {role} failed ({e}); using template summary", self.name);
                template_summary(outcome.score_before, outcome.score_after)
            }
        };
        info.appended(SharedEntry {
            direction_text: outcome.direction.text.clone(),
            outcome_summary: summary,
            score_delta: outcome.score_after - outcome.score_before,
        })
    }

    pub fn generate_validation_tests(&mut self, task: &Task, count: usize) -> Result<Vec<TestCase>, GatewayError> {
        if count == 0 {
            return Err(GatewayError::InvalidRequest("count must be at least 1".into()));
        }
        let count_text = count.to_string();
        let messages = self.render(Role::GenTests, &[("prompt", &task.prompt), ("count", &count_text)]);
        let raw = self.complete(Role::GenTests, messages)?;
        let tests = parse_tests(&raw, count);
        if tests.is_empty() {
            return Err(GatewayError::NoTests);
        }
        Ok(tests)
    }
}

pub fn template_summary(before: f64, after: f64) -> String {
    let verdict = if after > before {
        "improved"
    } else if after < before {
        "worsened"
    } else {
        "did not change"
    };
    format!("Validation score {verdict} ({before:.2} -> {after:.2}).")
}
