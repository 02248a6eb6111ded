//! Q-network parameterization: frozen prefix encoder, fixed output head and
//! a trainable adapter MLP in between.
//!
//! `Q(prefix, ·) = W · adapter(encode(prefix))`. Only the adapter is ever
//! updated; encoder and head live behind an [`Arc`] so online and target
//! networks share them.

mod encoder;
mod ignorable;
mod model;

pub use encoder::{FrozenEncoder, LmHead, VocabSpec};
pub use ignorable::{ignorable_from_logits, IgnorableSet};
pub use model::{Checkpoint, GradientAccumulator, ModelConfig, QFunctionModel};
