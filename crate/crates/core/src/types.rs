//! Domain vocabulary shared by every module: tasks, candidate codes,
//! textual directions, search traces and their persistence format.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Assertion,
    IoPair,
}

/// A single executable check. For `IoPair` the payload is a JSON object
/// `{"input": ..., "output": ...}` describing stdin and expected stdout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub test_id: String,
    pub payload: String,
    pub kind: TestKind,
}

impl TestCase {
    pub fn assertion(test_id: impl Into<String>, payload: impl Into<String>) -> Self {
        Self {
            test_id: test_id.into(),
            payload: payload.into(),
            kind: TestKind::Assertion,
        }
    }

    pub fn io_pair(test_id: impl Into<String>, input: &str, output: &str) -> Self {
        Self {
            test_id: test_id.into(),
            payload: serde_json::json!({ "input": input, "output": output }).to_string(),
            kind: TestKind::IoPair,
        }
    }
}

/// A code-generation problem: prompt, hidden tests, and (once generated)
/// validation tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub prompt: String,
    pub hidden_tests: Vec<TestCase>,
    #[serde(default)]
    pub validation_tests: Vec<TestCase>,
    #[serde(default)]
    pub entry_point: Option<String>,
}

impl Task {
    pub fn new(task_id: impl Into<String>, prompt: impl Into<String>, hidden_tests: Vec<TestCase>) -> Self {
        Self {
            task_id: task_id.into(),
            prompt: prompt.into(),
            hidden_tests,
            validation_tests: Vec::new(),
            entry_point: None,
        }
    }

    pub fn with_entry_point(mut self, entry_point: impl Into<String>) -> Self {
        self.entry_point = Some(entry_point.into());
        self
    }

    /// Checks the evaluability invariants: non-empty H, unique ids within
    /// each list, and V disjoint from H by test id.
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden_tests.is_empty() {
            return Err(format!("task {} has no hidden tests", self.task_id));
        }
        let hidden = unique_ids(&self.hidden_tests)
            .map_err(|id| format!("task {}: duplicate hidden test id {id}", self.task_id))?;
        let validation = unique_ids(&self.validation_tests)
            .map_err(|id| format!("task {}: duplicate validation test id {id}", self.task_id))?;
        if let Some(id) = hidden.intersection(&validation).next() {
            return Err(format!("task {}: test id {id} is both hidden and validation", self.task_id));
        }
        Ok(())
    }
}

fn unique_ids(tests: &[TestCase]) -> Result<HashSet<&str>, String> {
    let mut seen = HashSet::new();
    for t in tests {
        if !seen.insert(t.test_id.as_str()) {
            return Err(t.test_id.clone());
        }
    }
    Ok(seen)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextualDirection {
    pub text: String,
    #[serde(default)]
    pub feedback: Option<String>,
    #[serde(default)]
    pub used: bool,
}

impl TextualDirection {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            feedback: None,
            used: false,
        }
    }

    /// Marks the direction as applied and attaches its outcome annotation.
    pub fn with_feedback(mut self, feedback: impl Into<String>) -> Self {
        self.feedback = Some(feedback.into());
        self.used = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedEntry {
    pub direction_text: String,
    pub outcome_summary: String,
    pub score_delta: f64,
}

/// Accumulated feedback about tried directions. Entries are append-only;
/// `rendered` is the prompt-injectable summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SharedInformation {
    entries: Vec<SharedEntry>,
    rendered: String,
}

impl SharedInformation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[SharedEntry] {
        &self.entries
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Returns a new value with `entry` appended and the summary re-rendered.
    pub fn appended(&self, entry: SharedEntry) -> Self {
        let mut entries = self.entries.clone();
        entries.push(entry);
        let rendered = render_entries(&entries);
        Self { entries, rendered }
    }

    /// Past direction with the largest score improvement, first one on ties.
    pub fn best_direction(&self) -> Option<&SharedEntry> {
        self.entries.iter().fold(None, |best: Option<&SharedEntry>, e| match best {
            Some(b) if b.score_delta >= e.score_delta => Some(b),
            _ => Some(e),
        })
    }
}

fn render_entries(entries: &[SharedEntry]) -> String {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "{}. Direction: {}\n   Outcome: {}\n   Validation score change: {:+.2}",
                i + 1,
                e.direction_text.trim(),
                e.outcome_summary.trim(),
                e.score_delta
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateNode {
    pub node_id: u32,
    pub source: String,
    pub parent: Option<u32>,
    pub direction_used: Option<TextualDirection>,
    pub depth: u32,
    pub validation_score: f64,
    pub passed_all_validation: bool,
    #[serde(default)]
    pub hidden_result: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Bon,
    Linear,
    Tree,
    Sfs,
    Irtd,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [Self::Bon, Self::Linear, Self::Tree, Self::Sfs, Self::Irtd];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bon => "bon",
            Self::Linear => "linear",
            Self::Tree => "tree",
            Self::Sfs => "sfs",
            Self::Irtd => "irtd",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// The full record of one strategy run on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub task_id: String,
    pub strategy: StrategyKind,
    /// Configuration label, distinguishing e.g. IRTD with 1, 3 or 5 initial codes.
    pub label: String,
    pub nodes: Vec<CandidateNode>,
    pub budget_k: u32,
    pub terminated_early: bool,
    pub run_seed: u64,
}

impl SearchTrace {
    pub fn new(task_id: impl Into<String>, strategy: StrategyKind, label: impl Into<String>, budget_k: u32, run_seed: u64) -> Self {
        Self {
            task_id: task_id.into(),
            strategy,
            label: label.into(),
            nodes: Vec::new(),
            budget_k,
            terminated_early: false,
            run_seed,
        }
    }

    pub fn node(&self, node_id: u32) -> Option<&CandidateNode> {
        // node ids are 1-based and dense
        self.nodes
            .get(node_id.checked_sub(1)? as usize)
            .filter(|n| n.node_id == node_id)
            .or_else(|| self.nodes.iter().find(|n| n.node_id == node_id))
    }

    /// Appends a node, assigning the next node id and deriving its depth
    /// from the parent.
    pub fn push(
        &mut self,
        source: String,
        parent: Option<u32>,
        direction_used: Option<TextualDirection>,
        validation_score: f64,
        passed_all_validation: bool,
    ) -> u32 {
        let node_id = self.nodes.len() as u32 + 1;
        let depth = match parent {
            Some(p) => self.node(p).expect("parent must precede child").depth + 1,
            None => 1,
        };
        self.nodes.push(CandidateNode {
            node_id,
            source,
            parent,
            direction_used,
            depth,
            validation_score,
            passed_all_validation,
            hidden_result: None,
        });
        node_id
    }

    /// Id of the depth-1 ancestor of `node_id` (itself for initial codes).
    pub fn root_of(&self, node_id: u32) -> Option<u32> {
        let mut node = self.node(node_id)?;
        while let Some(p) = node.parent {
            node = self.node(p)?;
        }
        Some(node.node_id)
    }

    /// Checks the structural invariants every strategy must uphold.
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: String| Err(TraceError::Invalid(msg));
        if self.nodes.len() > self.budget_k as usize {
            return bad(format!("{} nodes exceed budget {}", self.nodes.len(), self.budget_k));
        }
        let mut prev_id = 0;
        for node in &self.nodes {
            if node.node_id <= prev_id {
                return bad(format!("node ids not strictly increasing at {}", node.node_id));
            }
            prev_id = node.node_id;
            match node.parent {
                None if node.depth != 1 => return bad(format!("root node {} has depth {}", node.node_id, node.depth)),
                Some(p) => {
                    let Some(parent) = self.node(p).filter(|pn| pn.node_id < node.node_id) else {
                        return bad(format!("node {} has unknown or later parent {p}", node.node_id));
                    };
                    if node.depth != parent.depth + 1 {
                        return bad(format!("node {} depth {} != parent depth + 1", node.node_id, node.depth));
                    }
                }
                None => {}
            }
            if !(0.0..=1.0).contains(&node.validation_score) {
                return bad(format!("node {} score out of range", node.node_id));
            }
            if node.passed_all_validation != (node.validation_score == 1.0) {
                return bad(format!("node {} pass flag disagrees with score", node.node_id));
            }
            if let Some(d) = &node.direction_used {
                if d.feedback.is_some() && !d.used {
                    return bad(format!("node {} direction has feedback but is unused", node.node_id));
                }
            }
        }
        if self.terminated_early {
            let last_passed = self.nodes.last().is_some_and(|n| n.passed_all_validation);
            if !last_passed && self.nodes.len() != self.budget_k as usize {
                return bad("terminated early without a passing last node".into());
            }
        }
        Ok(())
    }

    pub fn hidden_verdicts_complete(&self) -> bool {
        self.nodes.iter().all(|n| n.hidden_result.is_some())
    }

    /// Canonical persistence file name: `<task_id>.<label>.<run_seed>.trace.json`.
    pub fn file_name(&self) -> String {
        trace_file_name(&self.task_id, &self.label, self.run_seed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization is infallible")
    }

    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf, TraceError> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_json()).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut trace: SearchTrace = serde_json::from_str(&text).map_err(|source| TraceError::Json {
            path: path.display().to_string(),
            source,
        })?;
        trace.nodes.sort_by_key(|n| n.node_id);
        Ok(trace)
    }
}

pub fn trace_file_name(task_id: &str, label: &str, run_seed: u64) -> String {
    format!("{}.{}.{}.trace.json", sanitize(task_id), sanitize(label), run_seed)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Depth of the earliest-generated node judged correct, if any.
pub fn first_correct_depth(trace: &SearchTrace, correct: impl Fn(u32) -> bool) -> Option<u32> {
    trace
        .nodes
        .iter()
        .filter(|n| correct(n.node_id))
        .min_by_key(|n| n.node_id)
        .map(|n| n.depth)
}

pub fn max_depth(trace: &SearchTrace) -> Result<u32, TraceError> {
    trace.nodes.iter().map(|n| n.depth).max().ok_or(TraceError::EmptyTrace)
}
