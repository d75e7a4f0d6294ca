//! Embedding-based soft Find: multi-scale contexts per token scored
//! against the pattern with a trainable bilinear form, plus the training
//! loops (supervised pretraining and policy-gradient finetuning).

mod embeddings;
mod scorer;
mod train;

pub use embeddings::{EmbeddingError, EmbeddingTable};
pub use scorer::{
    build_contexts, sigmoid, BilinearScorer, Context, ContextSet, ScorerError, ScorerSet,
    WindowTag,
};
pub use train::{
    generate_pretraining_data, grad_check, rl_finetune_step, train_step, PretrainConfig,
    RewardMode, TrainError, TrainSample,
};

use rand::Rng;

/// Standard normal draw via Box-Muller; keeps `rand_distr` out of the tree.
pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    let mut u1: f64 = rng.gen();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
