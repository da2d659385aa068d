use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CallContext, GenerationRequest};

/// Scripted responses keyed by `"task_id/role/call_index"`.
///
/// Lookups fall back from the exact key to `task/role/*`, `*/role/index`,
/// `*/role/*`, and finally `default_response`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(default)]
    pub default_response: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Structured(MockScript),
    Flat(BTreeMap<String, String>),
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.responses.insert(key.into(), response.into());
        self
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default_response = Some(response.into());
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(match serde_json::from_str::<ScriptFile>(text)? {
            ScriptFile::Structured(s) => s,
            ScriptFile::Flat(responses) => MockScript {
                responses,
                default_response: None,
            },
        })
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn lookup(&self, task_id: &str, role: &str, call_index: u32) -> Option<&str> {
        let idx = call_index.to_string();
        [
            format!("{task_id}/{role}/{idx}"),
            format!("{task_id}/{role}/*"),
            format!("*/{role}/{idx}"),
            format!("*/{role}/*"),
        ]
        .iter()
        .find_map(|k| self.responses.get(k))
        .or(self.default_response.as_ref())
        .map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, ctx: &CallContext<'_>, _request: &GenerationRequest) -> Result<String, BackendError> {
        self.script
            .lookup(ctx.task_id, ctx.role.as_str(), ctx.call_index)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Unscripted(format!("{}/{}/{}", ctx.task_id, ctx.role.as_str(), ctx.call_index)))
    }
}
