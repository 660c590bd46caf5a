//! Stage two: GraphSAGE and single-head attention layers over the undirected
//! view of the interaction graph, trained on the stage-one soft labels.
//!
//! Everything runs on the small reverse-mode engine in [`crate::tensor`],
//! full batch, in `f32`. The same forward code runs in `f64` for gradient
//! checking.

mod layers;
mod model;
mod train;

pub use layers::{
    gat_attention, gat_forward, sage_forward, ActivationKind, LayerKind, LayerParams, LayerSpec, Neighborhood,
};
pub use model::{loss_and_gradients, Model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{
    mlp_baseline, predict, predict_features, train, Architecture, EpochRecord, OptimizerKind, Prediction,
    TrainConfig, TrainHistory,
};

use crate::stance::Stance;

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("need at least {needed} labeled users of stance {stance}, found {found}")]
    TooFewLabels { stance: Stance, needed: usize, found: usize },
    #[error("label domain {labels} does not match {nodes} nodes")]
    LabelDomain { labels: usize, nodes: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("non-finite input features")]
    NonFiniteInput,
    #[error("malformed model checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
