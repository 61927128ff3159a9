//! Per-component cross-entropy training of a discriminative scorer.

mod checkpoint;
mod finetune;
mod loss;
mod optim;

pub use checkpoint::{config_hash, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use finetune::{
    evaluate_examples, finetune, grid_search_lambda0, lambda0_grid, EvalPoint, FinetuneOutcome, GridOutcome,
    GridPoint, TrainConfig,
};
pub use loss::{consistency_loss, example_loss, example_loss_and_grad, LossBreakdown};
pub use optim::{AdamW, LinearSchedule};

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::scoring::Scorer;

/// A scorer whose parameters can be trained through its token logits.
///
/// Parameters are exposed as one flat vector; `backward` accumulates into a
/// gradient buffer of the same length.
pub trait TrainableScorer<T: Scalar>: Scorer<T> + Clone + Send + Sync {
    type Tape: Send;

    fn parameters(&self) -> &[T];

    fn parameters_mut(&mut self) -> &mut [T];

    /// Forward pass that records what `backward` needs. Dropout is applied
    /// only when an rng is given.
    fn forward_train(&self, ids: &[u32], dropout: Option<&mut ChaCha8Rng>) -> Result<(Vec<T>, Self::Tape)>;

    /// Adds `d loss / d params` to `grads` given `d loss / d logits`.
    fn backward(&self, tape: &Self::Tape, dlogits: &[T], grads: &mut [T]) -> Result<()>;
}
