//! Scripted reward oracle speaking the bridge protocol, used by tests.
//!
//! Replies with `reward = tokens[0] / 10`. `--mode` selects a misbehaviour:
//! `echo` (default), `mismatch`, `malformed`, `hang`, `close`, `nonfinite`.
//! `--fail-after N` exits after answering N requests.

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};

fn main() {
    let mut args = std::env::args().skip(1);
    let mut mode = String::from("echo");
    let mut fail_after = u64::MAX;
    while let Some(a) = args.next() {
        match a.as_str() {
            "--mode" => mode = args.next().unwrap_or_default(),
            "--fail-after" => fail_after = args.next().and_then(|v| v.parse().ok()).unwrap_or(0),
            _ => {}
        }
    }
    let mut answered = 0u64;
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if answered == fail_after {
            return;
        }
        answered += 1;
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => break,
        };
        let id = req["id"].as_u64().unwrap_or(0);
        let first = req["tokens"][0].as_f64().unwrap_or(0.0);
        let reply = match mode.as_str() {
            "mismatch" => json!({"id": id + 1, "reward": first / 10.0}).to_string(),
            "malformed" => "reward: maybe".to_string(),
            "nonfinite" => format!("{{\"id\":{id},\"reward\":1e999}}"),
            "hang" => {
                std::thread::sleep(std::time::Duration::from_secs(30));
                continue;
            }
            "close" => return,
            _ => json!({"id": id, "reward": first / 10.0, "note": "echo"}).to_string(),
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
