//! Linear refinement through the OpenAI-compatible HTTP backend, served by a
//! local stub that answers every role with a canned completion.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use refine_search::gateway::{Gateway, GatewayConfig, HttpBackend, HttpConfig, PromptTemplates};
use refine_search::sandbox::MarkerExecutor;
use refine_search::strategies::{run_strategy, SearchEnv, StrategyConfig};
use refine_search::{Task, TestCase};

fn reply_for(body: &str) -> &'static str {
    if body.contains("test") && body.contains("assert") && !body.contains("def ") {
        "assert inc(1) == 2"
    } else if body.contains("Direction") || body.contains("direction") {
        "1. Add one instead of returning the input."
    } else {
        "```python\ndef inc(x):\n    return x + 1\n# passes: *\n```"
    }
}

/// Serves `n` chat-completion requests and returns the base URL.
fn stub(n: usize) -> anyhow::Result<(String, std::thread::JoinHandle<()>)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let url = format!("http://{}/v1", listener.local_addr()?);
    let handle = std::thread::spawn(move || {
        for stream in listener.incoming().take(n).flatten() {
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let text = reply_for(&String::from_utf8_lossy(&body));
            let resp = serde_json::json!({ "choices": [{ "message": { "content": text } }] }).to_string();
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                resp.len()
            );
        }
    });
    Ok((url, handle))
}

pub fn run_example() -> anyhow::Result<()> {
    let (base_url, server) = stub(2)?;
    let backend = HttpBackend::with_api_key(
        HttpConfig {
            base_url,
            model: "stub-model".into(),
            timeout_secs: 10,
        },
        None,
    )?;
    let gateway = Gateway::new(Arc::new(backend), PromptTemplates::default(), GatewayConfig::default());
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let task = Task::new("inc", "Write inc(x) returning x + 1.", vec![TestCase::assertion("h1", "assert inc(4) == 5")]);
    let run = run_strategy(&env, &task, &StrategyConfig::linear(4))?;
    server.join().map_err(|_| anyhow::anyhow!("stub server panicked"))?;
    println!("validation tests: {}", run.validation_tests.len());
    println!("nodes: {}, solved early: {}", run.trace.nodes.len(), run.trace.terminated_early);
    anyhow::ensure!(run.trace.terminated_early);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
