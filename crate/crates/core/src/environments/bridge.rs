use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_sequence, RewardOracle};
use crate::{Error, Result};

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    tokens: &'a [usize],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    reward: f64,
}

/// Reward oracle served by a child process.
///
/// Each evaluation writes `{"id":n,"tokens":[...]}\n` to the child's stdin
/// and waits for one `{"id":n,"reward":r}\n` line on its stdout. After any
/// protocol failure the bridge refuses further requests.
pub struct BridgeEnv {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    vocab_size: usize,
    length: usize,
    timeout: Duration,
    next_id: u64,
    broken: Option<String>,
}

impl BridgeEnv {
    pub fn spawn(program: &str, args: &[String], vocab_size: usize, length: usize, timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Environment(format!("cannot spawn {program}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::Environment("child stdout unavailable".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            vocab_size,
            length,
            timeout,
            next_id: 0,
            broken: None,
        })
    }

    fn fail(&mut self, msg: String) -> Error {
        self.broken = Some(msg.clone());
        Error::Environment(msg)
    }

    pub fn bridge_evaluate(&mut self, tokens: &[usize]) -> Result<f64> {
        if let Some(reason) = &self.broken {
            return Err(Error::Environment(format!("bridge unusable after earlier failure: {reason}")));
        }
        check_sequence(tokens, self.vocab_size, self.length)?;
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, tokens })?;
        line.push('\n');
        let written = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::Error::other("stdin closed")),
        };
        if let Err(e) = written {
            return Err(self.fail(format!("request {id}: write failed: {e}")));
        }
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.fail(format!("request {id}: read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(self.fail(format!("request {id}: no response within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(self.fail(format!("request {id}: child closed its output")))
            }
        };
        let resp: Response = match serde_json::from_str(reply.trim_end_matches('\r')) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(format!("request {id}: malformed response {reply:?}: {e}"))),
        };
        if resp.id != id {
            return Err(self.fail(format!("request {id}: response carries id {}", resp.id)));
        }
        if !resp.reward.is_finite() {
            return Err(self.fail(format!("request {id}: non-finite reward {}", resp.reward)));
        }
        Ok(resp.reward)
    }
}

impl RewardOracle for BridgeEnv {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn prompt_length(&self) -> usize {
        self.length
    }

    fn evaluate(&mut self, tokens: &[usize]) -> Result<f64> {
        self.bridge_evaluate(tokens)
    }
}

impl Drop for BridgeEnv {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
