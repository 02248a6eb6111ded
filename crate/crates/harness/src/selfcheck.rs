//! Quick oracle checks behind `seqopt verify`. The full suites live in the test targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqopt_core::environments::{dp_optimal_q, piecewise_reward, TabularEnv};
use seqopt_core::frozen_lm::ignorable_from_logits;
use seqopt_core::numkit::{Activation, MlpParams};
use seqopt_core::sparse_math::{sparsemax_dist, sparsemax_value, tsallis_entropy, BackupKind};
use seqopt_core::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("error[{}]: {e}", e.tag()) },
    }
}

pub fn run_self_checks() -> Vec<CheckResult> {
    vec![
        check("sparsemax_projection", sparsemax_projection()),
        check("value_identity", value_identity()),
        check("mlp_gradient", mlp_gradient()),
        check("hand_dp", hand_dp()),
        check("classification_reward", classification_reward()),
        check("filter_ties", filter_ties()),
    ]
}

/// Simplex projection by bisection on the threshold.
fn bisection_projection(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (max - 1.0, max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let mass: f64 = z.iter().map(|v| (v - mid).max(0.0)).sum();
        if mass > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    z.iter().map(|v| (v - t).max(0.0)).collect()
}

fn random_vectors(count: usize) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphas = [0.1, 0.5, 1.0, 2.0, 80.0];
    (0..count)
        .map(|i| {
            let n = rng.random_range(2..=64);
            let q = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            (q, alphas[i % alphas.len()])
        })
        .collect()
}

fn sparsemax_projection() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (q, alpha) in random_vectors(500) {
        let p = sparsemax_dist(&q, alpha)?;
        let z: Vec<f64> = q.iter().map(|v| v / alpha).collect();
        for (a, b) in p.probabilities().iter().zip(bisection_projection(&z)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst < 1e-9, format!("max error {worst:.3e} over 500 vectors")))
}

fn value_identity() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (q, alpha) in random_vectors(500) {
        let p = sparsemax_dist(&q, alpha)?;
        let lhs = alpha * sparsemax_value(&q, alpha)?;
        let rhs = p.expectation(&q) + alpha * tsallis_entropy(&p, 2.0, 1.0)?;
        worst = worst.max((lhs - rhs).abs());
    }
    let a: f64 = sparsemax_value(&[1.2, 0.8], 1.0)?;
    let b: f64 = sparsemax_value(&[0.0, 0.0], 1.0)?;
    let hand = (a - 1.29).abs().max((b - 0.25).abs());
    worst = worst.max(hand);
    Ok((worst < 1e-9, format!("max error {worst:.3e}")))
}

fn mlp_gradient() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mlp = MlpParams::<f64>::random(6, 16, Activation::Relu, &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |m: &MlpParams<f64>| -> Result<f64> { Ok(m.apply(&x)?.iter().zip(&w).map(|(a, b)| a * b).sum()) };
        let (_, cache) = mlp.forward(&x)?;
        let grads = mlp.backward(&cache, &w)?;
        let h = 1e-6;
        for (block, g) in grads.slices().iter().enumerate() {
            for (i, &analytic) in g.iter().enumerate() {
                let mut plus = mlp.clone();
                plus.slices_mut()[block][i] += h;
                let mut minus = mlp.clone();
                minus.slices_mut()[block][i] -= h;
                let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.3e}")))
}

fn hand_dp() -> Result<(bool, String)> {
    let env = TabularEnv::new(2, 2, [(vec![0, 0], 0.0), (vec![0, 1], 1.0), (vec![1, 0], 0.0), (vec![1, 1], 2.0)])?;
    let dp = dp_optimal_q(&env, 0.01, 1.0, BackupKind::Sparsemax, None)?;
    let root = dp.q(&[]).map(<[f64]>::to_vec).unwrap_or_default();
    let greedy = dp.greedy_sequence()?;
    let ok = root.len() == 2 && (root[0] - 1.0).abs() < 1e-9 && (root[1] - 2.0).abs() < 1e-9 && greedy == [1, 1];
    Ok((ok, format!("root {root:?}, greedy {greedy:?}")))
}

fn classification_reward() -> Result<(bool, String)> {
    let got = [
        piecewise_reward(&[0.6, 0.3, 0.1], 0, 180.0, 200.0)?,
        piecewise_reward(&[0.3, 0.6, 0.1], 0, 180.0, 200.0)?,
        piecewise_reward(&[0.45, 0.45, 0.1], 0, 180.0, 200.0)?,
    ];
    Ok((got == [60.0, -54.0, 0.0], format!("{got:?}")))
}

fn filter_ties() -> Result<(bool, String)> {
    let set = ignorable_from_logits(&[3.0, 2.0, 2.0, 0.0], 2)?;
    Ok((set.ignored_indices() == [3], format!("ignored {:?}", set.ignored_indices())))
}
