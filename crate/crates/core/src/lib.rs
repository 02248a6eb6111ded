//! Black-box optimization of fixed-length token sequences with
//! entropy-regularized Q-learning.
//!
//! The Q-network is a frozen sequence encoder followed by a trainable adapter
//! MLP and a fixed output head, `Q(prefix, ·) = W · adapter(encode(prefix))`.
//! Two regularizers are supported: Shannon entropy (softmax policy,
//! log-sum-exp backup) and sparse Tsallis entropy (sparsemax policy and
//! backup). Agents can additionally filter out low-ranked tokens per prefix
//! before computing either the policy or the bootstrapped target.
//!
//! All numerical code is generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64`, which is what the experiment harness uses.

pub mod agents;
pub mod environments;
pub mod error;
pub mod frozen_lm;
pub mod numkit;
pub mod scalar;
pub mod sparse_math;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = numkit::DenseMatrix<f64>;
pub type Mlp = numkit::MlpParams<f64>;
pub type Adam = numkit::AdamState<f64>;
pub type Distribution = sparse_math::ActionDistribution<f64>;
pub type Logits = sparse_math::FilteredLogits<f64>;
pub type Encoder = frozen_lm::FrozenEncoder<f64>;
pub type Head = frozen_lm::LmHead<f64>;
pub type QModel = frozen_lm::QFunctionModel<f64>;
pub type Agent = agents::AgentState<f64>;

pub type MatrixF32 = numkit::DenseMatrix<f32>;
pub type MlpF32 = numkit::MlpParams<f32>;
pub type QModelF32 = frozen_lm::QFunctionModel<f32>;
pub type AgentF32 = agents::AgentState<f32>;
