use std::time::{Duration, Instant};

use seqopt_core::environments::{BridgeEnv, RewardOracle};
use seqopt_core::Error;

const ECHO: &str = env!("CARGO_BIN_EXE_echo-oracle");

fn spawn(mode: &str, timeout_ms: u64) -> BridgeEnv {
    let args = vec!["--mode".to_string(), mode.to_string()];
    BridgeEnv::spawn(ECHO, &args, 20, 3, Duration::from_millis(timeout_ms)).unwrap()
}

#[test]
fn round_trip() {
    let mut env = spawn("echo", 5000);
    assert_eq!(env.vocab_size(), 20);
    assert_eq!(env.prompt_length(), 3);
    for first in [0usize, 3, 19, 7] {
        let r = env.evaluate(&[first, 1, 2]).unwrap();
        assert_eq!(r, first as f64 / 10.0);
    }
}

#[test]
fn out_of_range_tokens_are_rejected_locally() {
    let mut env = spawn("echo", 5000);
    assert!(matches!(env.evaluate(&[20, 0, 0]), Err(Error::Input(_))));
    assert!(matches!(env.evaluate(&[1, 0]), Err(Error::Input(_))));
    assert_eq!(env.evaluate(&[5, 0, 0]).unwrap(), 0.5);
}

#[test]
fn id_mismatch_breaks_the_bridge() {
    let mut env = spawn("mismatch", 5000);
    let err = env.evaluate(&[1, 2, 3]).unwrap_err();
    assert!(matches!(err, Error::Environment(_)), "{err}");
    assert!(err.to_string().contains("id"), "{err}");
    assert!(matches!(env.evaluate(&[1, 2, 3]), Err(Error::Environment(_))));
}

#[test]
fn timeout_is_reported() {
    let mut env = spawn("hang", 200);
    let start = Instant::now();
    let err = env.evaluate(&[1, 2, 3]).unwrap_err();
    assert!(start.elapsed() < Duration::from_secs(5));
    assert!(matches!(err, Error::Environment(_)));
    assert!(err.to_string().contains("no response"), "{err}");
}

#[test]
fn malformed_line_is_reported() {
    let mut env = spawn("malformed", 5000);
    let err = env.evaluate(&[1, 2, 3]).unwrap_err();
    assert!(matches!(err, Error::Environment(_)), "{err}");
}

#[test]
fn non_finite_reward_is_reported() {
    let mut env = spawn("nonfinite", 5000);
    assert!(matches!(env.evaluate(&[1, 2, 3]), Err(Error::Environment(_))));
}

#[test]
fn closed_child_is_reported() {
    let mut env = spawn("close", 5000);
    assert!(matches!(env.evaluate(&[1, 2, 3]), Err(Error::Environment(_))));
}

#[test]
fn missing_program_fails_to_spawn() {
    let res = BridgeEnv::spawn("/nonexistent/oracle", &[], 4, 2, Duration::from_millis(100));
    assert!(matches!(res, Err(Error::Environment(_))));
}
