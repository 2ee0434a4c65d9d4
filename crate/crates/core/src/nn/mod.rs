//! Small feed-forward networks with hand-written reverse-mode gradients.

mod adam;
mod checkpoint;
mod mlp;
mod norm;
mod policy;

use thiserror::Error;

pub use adam::OptimizerState;
pub use checkpoint::{load_json, save_json, CHECKPOINT_VERSION};
pub use mlp::{Activation, Mlp, MlpCache};
pub use norm::RunningNorm;
pub use policy::{gaussian_entropy, gaussian_log_prob, GaussianPolicy, PolicyCache, LOG_STD_MIN};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}
