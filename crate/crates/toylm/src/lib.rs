//! A small trainable discriminator for exercising the scoring and training
//! stack end to end: a transformer encoder with a per-token logit head,
//! replaced-token-detection pretraining, and a generated sentiment task.

pub mod encoder;
mod linalg;
pub mod rtd;
pub mod synthetic;

pub use encoder::{EncoderConfig, Layout, Tape, ToyDiscriminator};
pub use rtd::{
    auc, pretrain_rtd, rtd_eval, rtd_loss_and_grad, Corruption, Corruptor, ReplacementSampler, RtdCorpusConfig,
    RtdEval, RtdTrace, RtdTrainConfig,
};
pub use synthetic::{
    make_synthetic_task, synthetic_spec, synthetic_tokenizer, SyntheticConfig, SyntheticData, SyntheticSplits,
};

pub type ToyDiscriminatorF64 = ToyDiscriminator<f64>;
pub type ToyDiscriminatorF32 = ToyDiscriminator<f32>;
