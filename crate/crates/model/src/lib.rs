//! Neural ranking model over consultations and behavior histories, its two
//! training losses and the training loop.
//!
//! A session is first turned into a [`SessionInput`] (token ids and table
//! rows only), then [`Vaps::forward_session`] builds its graph: text
//! encoder, consultation-action cross-attention, a single self-attention
//! layer over the user's sequence, and dot-product candidate scores.

mod config;
mod input;
mod model;
mod scorer;
mod select;
mod train;
mod vocab;

use thiserror::Error;
use vaps_core::corpus::{ItemId, UserId};

pub use config::ModelConfig;
pub use input::{prepare_session, ActionSet, ItemAction, SearchAction, SessionInput};
pub use model::{Bound, CaiOut, SessionOut, Vaps, SEG_CONSULT, SEG_ITEM_HIST, SEG_QUERY, SEG_QUERY_HIST, SEG_USER};
pub use scorer::ModelScorer;
pub use select::{recent_selections, selections_from_reports, value_selections, Selections};
pub use train::{
    attention_mass, batch_loss, build_inputs, loss_search, loss_va, nll_first, total_loss, train, EpochLog, LossParts,
    TrainConfig, TrainOutcome, ValidSet,
};
pub use vocab::{Lookup, ModelMeta, Vocabulary, UNK};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("model metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Tensor(#[from] vaps_tensor::TensorError),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("no selection for user {0} at {1}")]
    MissingSelection(UserId, u64),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Eval(#[from] vaps_core::eval::EvalError),
    #[error(transparent)]
    Value(#[from] vaps_core::value::ValueError),
}
