//! Character-level micro-GPT over the digit vocabulary.

pub mod checkpoint;
mod config;
mod gpt;
mod inference;
mod loss;
pub mod ops;
mod params;

pub use config::ModelConfig;
pub use gpt::{DropoutRng, ForwardCache, Mode};
pub use inference::{
    argmax, forward, generate_answers, greedy_generate, greedy_generate_batch,
    hidden_representation, hidden_representations, next_token_distribution, next_token_distributions, ForwardTrace,
};
pub use loss::{batch_loss, loss_and_grads, LossMask};
pub use ops::Scalar;
pub use params::{ParamLayout, Params, TensorEntry, TensorRole};
