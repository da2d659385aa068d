use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refine_search::analysis::{
    diversity_matrix, embed_directions, first_correct_depth_table, max_depth_table, text_hash, EmbeddingSource,
};
use refine_search::{SearchTrace, StrategyKind, TextualDirection};

/// A random forest of up to 16 nodes with random verdicts.
fn random_trace(rng: &mut ChaCha8Rng, i: usize) -> SearchTrace {
    let mut t = SearchTrace::new(format!("t{i}"), StrategyKind::Sfs, "sfs", 16, 0);
    let n = rng.gen_range(0..=16);
    for k in 0..n {
        let parent = if k == 0 || rng.gen_bool(0.3) { None } else { Some(rng.gen_range(1..=k as u32)) };
        let dir = parent.map(|_| TextualDirection::new(format!("d{}", rng.gen_range(0..20))));
        let id = t.push(format!("c{k}"), parent, dir, 0.0, false);
        t.nodes[id as usize - 1].hidden_result = Some(rng.gen_bool(0.15));
    }
    t
}

#[test]
fn depth_tables_match_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let traces: Vec<_> = (0..rng.gen_range(1..60)).map(|i| random_trace(&mut rng, i)).collect();
        // recount: walk parents to get depth, scan in id order for the first correct node
        let depth_of = |t: &SearchTrace, id: u32| {
            let mut d = 1;
            let mut cur = t.nodes[id as usize - 1].parent;
            while let Some(p) = cur {
                d += 1;
                cur = t.nodes[p as usize - 1].parent;
            }
            d
        };
        let mut first: BTreeMap<u32, usize> = BTreeMap::new();
        let mut maxd: BTreeMap<u32, usize> = BTreeMap::new();
        for t in &traces {
            if let Some(n) = t.nodes.iter().find(|n| n.hidden_result == Some(true)) {
                *first.entry(depth_of(t, n.node_id)).or_default() += 1;
            }
            if let Some(m) = t.nodes.iter().map(|n| depth_of(t, n.node_id)).max() {
                *maxd.entry(m).or_default() += 1;
            }
        }
        let fc = first_correct_depth_table(&traces).unwrap();
        assert_eq!(fc.counts, first);
        assert_eq!(fc.counted + fc.excluded, traces.len());
        let md = max_depth_table(&traces);
        assert_eq!(md.counts, maxd);
        for table in [&fc, &md] {
            if table.counted > 0 {
                let sum: f64 = table.row(0).iter().map(|c| c.parse::<f64>().unwrap()).sum();
                assert!((sum - 100.0).abs() <= 0.02 + 1e-9, "{sum}");
            }
        }
    }
}

#[test]
fn irtd_traces_have_no_mass_at_depth_three() {
    let mut t = SearchTrace::new("a", StrategyKind::Irtd, "irtd-n3", 16, 0);
    for _ in 0..3 {
        t.push("x".into(), None, None, 0.0, false);
    }
    for k in 0..13 {
        t.push("y".into(), Some(k % 3 + 1), Some(TextualDirection::new("d")), 0.0, false);
    }
    t.nodes.iter_mut().enumerate().for_each(|(i, n)| n.hidden_result = Some(i == 9));
    let table = first_correct_depth_table(&[t]).unwrap();
    assert_eq!(table.row(3), ["0.00", "100.00", "0.00"]);
}

fn brute_force(steps: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let n = steps.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut vals = Vec::new();
            for (a, u) in steps[i].iter().enumerate() {
                for (b, v) in steps[j].iter().enumerate() {
                    if !(i == j && a == b) {
                        vals.push(cos(u, v));
                    }
                }
            }
            m[i][j] = if vals.is_empty() { 1.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
        }
    }
    m
}

proptest! {
    #[test]
    fn diversity_matches_brute_force(
        steps in prop::collection::vec(
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3)), 1..5),
            1..6,
        )
    ) {
        let m = diversity_matrix(&steps).unwrap();
        let oracle = brute_force(&steps);
        for i in 0..steps.len() {
            for j in 0..steps.len() {
                prop_assert!((m.values[i][j] - oracle[i][j]).abs() < 1e-12);
                prop_assert!((m.values[i][j] - m.values[j][i]).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&m.values[i][j]));
            }
        }
    }
}

fn trace_with(texts: &[&str]) -> SearchTrace {
    let mut t = SearchTrace::new("a", StrategyKind::Linear, "linear", 16, 0);
    let mut p = t.push("c".into(), None, None, 0.0, false);
    for text in texts {
        p = t.push("c".into(), Some(p), Some(TextualDirection::new(*text)), 0.0, false);
    }
    t
}

#[test]
fn jsonl_embeddings_and_missing_names() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    let line = |t: &str, v: [f64; 2]| serde_json::json!({ "text_hash": text_hash(t), "vector": v }).to_string();
    std::fs::write(&path, format!("{}\n{}\n", line("alpha", [3.0, 4.0]), line("beta", [0.0, 2.0]))).unwrap();
    let src = EmbeddingSource::Jsonl { path: path.clone() };
    let map = embed_directions(&[trace_with(&["alpha", "beta"])], &src).unwrap();
    assert_eq!(map["alpha"], [0.6, 0.8]);
    assert_eq!(map["beta"], [0.0, 1.0]);
    let err = embed_directions(&[trace_with(&["alpha", "gamma ray"])], &src).unwrap_err();
    assert!(err.to_string().contains("gamma ray"), "{err}");
    assert_eq!(text_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

/// Serves one embeddings request with a vector derived from each input's length.
fn stub_server() -> (String, std::thread::JoinHandle<serde_json::Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/embeddings", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let data: Vec<_> = req["input"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, t)| serde_json::json!({ "index": i, "embedding": [t.as_str().unwrap().len() as f64, 1.0] }))
            .collect();
        let resp = serde_json::json!({ "data": data }).to_string();
        let mut stream = stream;
        write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}", resp.len()).unwrap();
        req
    });
    (url, handle)
}

#[test]
fn endpoint_round_trip_is_deterministic() {
    let traces = [trace_with(&["abc", "abcdefg", "abc"])];
    let mut results = Vec::new();
    for _ in 0..2 {
        let (url, handle) = stub_server();
        let src = EmbeddingSource::Http {
            url,
            model: Some("stub".into()),
            api_key_env: None,
        };
        let map = embed_directions(&traces, &src).unwrap();
        let req = handle.join().unwrap();
        assert_eq!(req["model"], "stub");
        assert_eq!(req["input"].as_array().unwrap().len(), 2);
        let steps = vec![vec![map["abc"].clone(), map["abcdefg"].clone()]];
        results.push(diversity_matrix(&steps).unwrap());
    }
    assert_eq!(results[0], results[1]);
    let expected = (3.0 * 7.0 + 1.0) / ((10.0f64).sqrt() * (50.0f64).sqrt());
    assert!((results[0].values[0][0] - expected).abs() < 1e-12);
}
