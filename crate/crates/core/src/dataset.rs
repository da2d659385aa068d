//! JSONL task ingestion with HumanEval- and MBPP-style adapters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{Task, TestCase};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Detect per record from the fields present.
    #[default]
    Auto,
    Native,
    Humaneval,
    Mbpp,
}

#[derive(Deserialize)]
struct HumanEvalRecord {
    task_id: String,
    prompt: String,
    test: String,
    entry_point: String,
}

#[derive(Deserialize)]
struct MbppRecord {
    task_id: Value,
    text: String,
    test_list: Vec<String>,
}

pub fn load_tasks(path: &Path, format: DatasetFormat) -> Result<Vec<Task>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tasks(&text, format)
}

pub fn parse_tasks(text: &str, format: DatasetFormat) -> Result<Vec<Task>, DatasetError> {
    let mut tasks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Record { line: line_no, message };
        let value: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let format = match format {
            DatasetFormat::Auto => detect(&value).ok_or_else(|| err("unrecognized record shape".into()))?,
            f => f,
        };
        let task = match format {
            DatasetFormat::Native => serde_json::from_value::<Task>(value).map_err(|e| err(e.to_string()))?,
            DatasetFormat::Humaneval => {
                let r: HumanEvalRecord = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
                from_humaneval(r)
            }
            DatasetFormat::Mbpp => {
                let r: MbppRecord = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
                from_mbpp(r)
            }
            DatasetFormat::Auto => unreachable!(),
        };
        task.validate().map_err(err)?;
        tasks.push(task);
    }
    Ok(tasks)
}

fn detect(value: &Value) -> Option<DatasetFormat> {
    let has = |k: &str| value.get(k).is_some();
    if has("hidden_tests") {
        Some(DatasetFormat::Native)
    } else if has("test_list") && has("text") {
        Some(DatasetFormat::Mbpp)
    } else if has("prompt") && has("test") && has("entry_point") {
        Some(DatasetFormat::Humaneval)
    } else {
        None
    }
}

fn from_humaneval(r: HumanEvalRecord) -> Task {
    // The HumanEval `test` field defines `check(candidate)`; the hidden test
    // invokes it on the entry point.
    let payload = format!("{}\ncheck({})", r.test.trim_end(), r.entry_point);
    Task::new(r.task_id, r.prompt, vec![TestCase::assertion("h1", payload)]).with_entry_point(r.entry_point)
}

fn from_mbpp(r: MbppRecord) -> Task {
    let task_id = match r.task_id {
        Value::String(s) => s,
        other => other.to_string(),
    };
    let hidden = r
        .test_list
        .into_iter()
        .enumerate()
        .map(|(i, t)| TestCase::assertion(format!("h{}", i + 1), t))
        .collect();
    Task::new(task_id, r.text, hidden)
}
