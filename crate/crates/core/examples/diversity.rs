//! Direction-similarity matrices from precomputed embeddings keyed by the
//! SHA-256 of each direction text.

use std::io::Write;

use refine_search::analysis::{
    diversity_matrix_sparse, direction_texts, embed_directions, group_embeddings, text_hash, EmbeddingSource, Grouping,
};
use refine_search::{SearchTrace, StrategyKind, TextualDirection};

/// Bag-of-letters vector, enough to make related texts similar.
fn toy_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 26];
    for b in text.bytes().filter(u8::is_ascii_alphabetic) {
        v[(b.to_ascii_lowercase() - b'a') as usize] += 1.0;
    }
    v
}

fn trace() -> SearchTrace {
    let mut t = SearchTrace::new("demo", StrategyKind::Sfs, "sfs", 16, 0);
    let a = t.push("a".into(), None, None, 0.2, false);
    let b = t.push("b".into(), None, None, 0.4, false);
    for (parent, text) in [
        (a, "Handle the empty list first."),
        (b, "Handle an empty input list."),
        (a, "Use a dictionary for counting."),
        (b, "Count with collections.Counter."),
        (a, "Return early on invalid input."),
    ] {
        t.push("c".into(), Some(parent), Some(TextualDirection::new(text)), 0.5, false);
    }
    t
}

pub fn run_example() -> anyhow::Result<()> {
    let traces = [trace()];
    let path = std::env::temp_dir().join(format!("refine-search-embeddings-{}.jsonl", std::process::id()));
    let mut file = std::fs::File::create(&path)?;
    for text in direction_texts(&traces) {
        writeln!(file, "{}", serde_json::json!({ "text_hash": text_hash(&text), "vector": toy_embedding(&text) }))?;
    }
    drop(file);
    let embeddings = embed_directions(&traces, &EmbeddingSource::Jsonl { path: path.clone() })?;
    for grouping in Grouping::ALL {
        let matrix = diversity_matrix_sparse(&group_embeddings(&traces, &embeddings, grouping)?)?;
        print!("{}", matrix.to_csv(grouping.describe()));
    }
    std::fs::remove_file(&path)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
