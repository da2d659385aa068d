//! Post-hoc analysis of completed traces: depth distributions and
//! direction-diversity matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::SearchTrace;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unevaluated trace: task {task_id} node {node_id} has no hidden verdict")]
    UnevaluatedTrace { task_id: String, node_id: u32 },
    #[error("zero vector in step {step}")]
    ZeroVector { step: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step {0} has no directions")]
    EmptyStep(usize),
    #[error("no embedding for {} direction(s): {}", .0.len(), .0.join(" | "))]
    MissingEmbeddings(Vec<String>),
    #[error("embeddings source: {0}")]
    Source(String),
}

/// Percentage of traces at each depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthTable {
    pub counts: BTreeMap<u32, usize>,
    /// Traces entering the percentages.
    pub counted: usize,
    /// Traces left out: unsolved ones for first-correct tables, empty ones
    /// for max-depth tables.
    pub excluded: usize,
}

impl DepthTable {
    fn from_depths(depths: impl IntoIterator<Item = Option<u32>>) -> Self {
        let mut counts = BTreeMap::new();
        let (mut counted, mut excluded) = (0, 0);
        for d in depths {
            match d {
                Some(d) => {
                    *counts.entry(d).or_insert(0) += 1;
                    counted += 1;
                }
                None => excluded += 1,
            }
        }
        Self { counts, counted, excluded }
    }

    pub fn max_observed(&self) -> u32 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    pub fn percentage(&self, depth: u32) -> f64 {
        if self.counted == 0 {
            return 0.0;
        }
        100.0 * *self.counts.get(&depth).unwrap_or(&0) as f64 / self.counted as f64
    }

    /// Two-decimal percentages for depths 1..=max(observed, `min_columns`).
    pub fn row(&self, min_columns: u32) -> Vec<String> {
        (1..=self.max_observed().max(min_columns))
            .map(|d| format!("{:.2}", self.percentage(d)))
            .collect()
    }
}

/// Distribution of the depth of the first hidden-correct node over solved
/// traces.
pub fn first_correct_depth_table(traces: &[SearchTrace]) -> Result<DepthTable, AnalysisError> {
    let mut depths = Vec::with_capacity(traces.len());
    for t in traces {
        if let Some(n) = t.nodes.iter().find(|n| n.hidden_result.is_none()) {
            return Err(AnalysisError::UnevaluatedTrace {
                task_id: t.task_id.clone(),
                node_id: n.node_id,
            });
        }
        depths.push(crate::types::first_correct_depth(t, |id| {
            t.node(id).and_then(|n| n.hidden_result).unwrap_or(false)
        }));
    }
    Ok(DepthTable::from_depths(depths))
}

/// Distribution of the deepest node over all non-empty traces.
pub fn max_depth_table(traces: &[SearchTrace]) -> DepthTable {
    DepthTable::from_depths(traces.iter().map(|t| crate::types::max_depth(t).ok()))
}

/// Both tables per trace label as CSV, one row per (label, table).
pub fn depth_tables_csv(traces: &[SearchTrace], min_columns: u32) -> Result<String, AnalysisError> {
    let mut by_label: BTreeMap<&str, Vec<SearchTrace>> = BTreeMap::new();
    for t in traces {
        by_label.entry(t.label.as_str()).or_default().push(t.clone());
    }
    let mut rows = Vec::new();
    for (label, ts) in &by_label {
        rows.push((*label, "first_correct", first_correct_depth_table(ts)?));
        rows.push((*label, "max_depth", max_depth_table(ts)));
    }
    let width = rows.iter().map(|r| r.2.max_observed()).max().unwrap_or(0).max(min_columns);
    let mut out = String::from("label,table,counted,excluded");
    for d in 1..=width {
        let _ = write!(out, ",depth_{d}");
    }
    out.push('\n');
    for (label, kind, table) in rows {
        let _ = writeln!(out, "{label},{kind},{},{},{}", table.counted, table.excluded, table.row(width).join(","));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMatrix {
    /// values[i][j]: mean cosine similarity between steps i and j.
    pub values: Vec<Vec<f64>>,
    /// Steps with one direction, whose diagonal is set to 1.0.
    pub single_direction_steps: Vec<usize>,
}

/// Mean pairwise cosine similarity between the directions of each pair of
/// steps, leaving out self-pairs on the diagonal.
pub fn diversity_matrix(steps: &[Vec<Vec<f64>>]) -> Result<DiversityMatrix, AnalysisError> {
    let dim = steps.iter().flatten().next().map_or(0, Vec::len);
    let mut units: Vec<Vec<Vec<f64>>> = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        if step.is_empty() {
            return Err(AnalysisError::EmptyStep(i));
        }
        let mut normed = Vec::with_capacity(step.len());
        for v in step {
            if v.len() != dim {
                return Err(AnalysisError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(AnalysisError::ZeroVector { step: i });
            }
            normed.push(v.iter().map(|x| x / norm).collect::<Vec<_>>());
        }
        units.push(normed);
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
    let n = units.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut single = Vec::new();
    for i in 0..n {
        for j in i..n {
            let (mut sum, mut pairs) = (0.0, 0usize);
            for (a, u) in units[i].iter().enumerate() {
                for (b, v) in units[j].iter().enumerate() {
                    if i == j && a == b {
                        continue;
                    }
                    sum += dot(u, v);
                    pairs += 1;
                }
            }
            let m = if pairs == 0 {
                single.push(i);
                1.0
            } else {
                sum / pairs as f64
            };
            values[i][j] = m;
            values[j][i] = m;
        }
    }
    Ok(DiversityMatrix {
        values,
        single_direction_steps: single,
    })
}

impl DiversityMatrix {
    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::new();
        for line in header.lines() {
            let _ = writeln!(out, "# {line}");
        }
        if !self.single_direction_steps.is_empty() {
            let steps: Vec<String> = self.single_direction_steps.iter().map(|s| (s + 1).to_string()).collect();
            let _ = writeln!(out, "# single-direction steps (diagonal set to 1.0): {}", steps.join(" "));
        }
        out.push_str("step");
        for j in 1..=self.values.len() {
            let _ = write!(out, ",{j}");
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            let _ = write!(out, "{}", i + 1);
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }

    /// Heatmap with a blue (−1) to white (0) to red (+1) scale.
    pub fn to_svg(&self, title: &str) -> String {
        const CELL: usize = 32;
        const MARGIN: usize = 40;
        let n = self.values.len();
        let size = MARGIN + n * CELL + 10;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"10\">\n",
            size + 20
        );
        let _ = writeln!(out, "<text x=\"{MARGIN}\" y=\"14\" font-size=\"12\">{}</text>", xml_escape(title));
        for (i, row) in self.values.iter().enumerate() {
            let y = MARGIN + 10 + i * CELL;
            let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", MARGIN - 4, y + CELL / 2 + 4, i + 1);
            let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", MARGIN + i * CELL + CELL / 2, MARGIN + 4, i + 1);
            for (j, &v) in row.iter().enumerate() {
                let (r, g, b) = color(v);
                let _ = writeln!(
                    out,
                    "<rect x=\"{}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb({r},{g},{b})\"><title>{v:.3}</title></rect>",
                    MARGIN + j * CELL
                );
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

fn color(v: f64) -> (u8, u8, u8) {
    let t = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    if t >= 0.0 {
        (255, fade(t), fade(t))
    } else {
        (fade(t), fade(t), 255)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Hex SHA-256 of a direction text, the key of precomputed embeddings.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// JSONL lines of `{"text_hash": ..., "vector": [...]}`.
    Jsonl { path: PathBuf },
    /// OpenAI-compatible `/embeddings` endpoint.
    Http {
        url: String,
        #[serde(default)]
        model: Option<String>,
        /// Environment variable holding the bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

#[derive(Deserialize)]
struct EmbeddingLine {
    text_hash: String,
    vector: Vec<f64>,
}

/// Every distinct direction text in trace order.
pub fn direction_texts(traces: &[SearchTrace]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    traces
        .iter()
        .flat_map(|t| t.nodes.iter())
        .filter_map(|n| n.direction_used.as_ref().map(|d| d.text.clone()))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Unit-length embedding of every direction text in `traces`.
pub fn embed_directions(
    traces: &[SearchTrace],
    source: &EmbeddingSource,
) -> Result<HashMap<String, Vec<f64>>, AnalysisError> {
    let texts = direction_texts(traces);
    let raw: HashMap<String, Vec<f64>> = match source {
        EmbeddingSource::Jsonl { path } => {
            let by_hash = load_jsonl(path)?;
            let mut found = HashMap::new();
            let mut missing = Vec::new();
            for t in &texts {
                match by_hash.get(&text_hash(t)) {
                    Some(v) => {
                        found.insert(t.clone(), v.clone());
                    }
                    None => missing.push(t.clone()),
                }
            }
            if !missing.is_empty() {
                return Err(AnalysisError::MissingEmbeddings(missing));
            }
            found
        }
        EmbeddingSource::Http { url, model, api_key_env } => {
            let key = api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
            let vectors = fetch_embeddings(url, model.as_deref(), key.as_deref(), &texts)?;
            texts.iter().cloned().zip(vectors).collect()
        }
    };
    let mut out = HashMap::with_capacity(raw.len());
    for (text, v) in raw {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(AnalysisError::Source(format!("zero or non-finite embedding for `{text}`")));
        }
        out.insert(text, v.iter().map(|x| x / norm).collect());
    }
    Ok(out)
}

fn load_jsonl(path: &Path) -> Result<HashMap<String, Vec<f64>>, AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(|e| AnalysisError::Source(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: EmbeddingLine =
            serde_json::from_str(line).map_err(|e| AnalysisError::Source(format!("{} line {}: {e}", path.display(), i + 1)))?;
        map.insert(rec.text_hash, rec.vector);
    }
    Ok(map)
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

fn fetch_embeddings(url: &str, model: Option<&str>, key: Option<&str>, texts: &[String]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| AnalysisError::Source(e.to_string()))?;
    let mut body = serde_json::json!({ "input": texts });
    if let Some(m) = model {
        body["model"] = serde_json::json!(m);
    }
    let mut req = client.post(url).json(&body);
    if let Some(k) = key {
        req = req.bearer_auth(k);
    }
    let resp = req.send().map_err(|e| AnalysisError::Source(format!("{url}: {e}")))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| AnalysisError::Source(e.to_string()))?;
    if !status.is_success() {
        return Err(AnalysisError::Source(format!("{url}: HTTP {status}: {text}")));
    }
    let parsed: EmbeddingResponse = serde_json::from_str(&text).map_err(|e| AnalysisError::Source(format!("bad response: {e}")))?;
    let mut data = parsed.data;
    if data.iter().all(|d| d.index.is_some()) {
        data.sort_by_key(|d| d.index);
    }
    if data.len() != texts.len() {
        let missing = texts[data.len().min(texts.len())..].to_vec();
        return Err(AnalysisError::MissingEmbeddings(missing));
    }
    Ok(data.into_iter().map(|d| d.embedding).collect())
}

/// How directions are bucketed into the matrix axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// The k-th refined node of each trace, in node-id order, goes to step k.
    RefinementStep,
    /// Directions below the k-th initial code of each trace go to step k.
    InitialCode,
}

impl Grouping {
    pub const ALL: [Grouping; 2] = [Grouping::RefinementStep, Grouping::InitialCode];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RefinementStep => "refinement_step",
            Self::InitialCode => "initial_code",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Self::RefinementStep => "axis: refinement ordinal (k-th refined node of each trace, by node id)",
            Self::InitialCode => "axis: initial code (k-th root of each trace, by node id)",
        }
    }
}

/// Embedding lists per step under `grouping`, dropping trailing empty steps.
pub fn group_embeddings(
    traces: &[SearchTrace],
    embeddings: &HashMap<String, Vec<f64>>,
    grouping: Grouping,
) -> Result<Vec<Vec<Vec<f64>>>, AnalysisError> {
    let mut steps: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut missing = BTreeSet::new();
    for t in traces {
        let roots: Vec<u32> = t.nodes.iter().filter(|n| n.parent.is_none()).map(|n| n.node_id).collect();
        let mut ordinal = 0;
        for n in &t.nodes {
            let Some(d) = &n.direction_used else { continue };
            ordinal += 1;
            let step = match grouping {
                Grouping::RefinementStep => ordinal,
                Grouping::InitialCode => {
                    let root = t.root_of(n.node_id).unwrap_or(n.node_id);
                    roots.iter().position(|&r| r == root).map_or(1, |p| p + 1)
                }
            };
            let Some(v) = embeddings.get(&d.text) else {
                missing.insert(d.text.clone());
                continue;
            };
            if steps.len() < step {
                steps.resize(step, Vec::new());
            }
            steps[step - 1].push(v.clone());
        }
    }
    if !missing.is_empty() {
        return Err(AnalysisError::MissingEmbeddings(missing.into_iter().collect()));
    }
    Ok(steps)
}

/// Like [`diversity_matrix`] but tolerant of empty steps, which become NaN
/// rows and columns.
pub fn diversity_matrix_sparse(steps: &[Vec<Vec<f64>>]) -> Result<DiversityMatrix, AnalysisError> {
    let present: Vec<usize> = (0..steps.len()).filter(|&i| !steps[i].is_empty()).collect();
    let dense: Vec<Vec<Vec<f64>>> = present.iter().map(|&i| steps[i].clone()).collect();
    let m = diversity_matrix(&dense)?;
    let n = steps.len();
    let mut values = vec![vec![f64::NAN; n]; n];
    for (a, &i) in present.iter().enumerate() {
        for (b, &j) in present.iter().enumerate() {
            values[i][j] = m.values[a][b];
        }
    }
    Ok(DiversityMatrix {
        values,
        single_direction_steps: m.single_direction_steps.iter().map(|&s| present[s]).collect(),
    })
}
