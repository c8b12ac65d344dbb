//! Masked language model interface.
//!
//! Everything downstream talks to a model through two capabilities:
//! [`FillMask`] for single-mask distribution queries and [`MlmTrainer`] for
//! masked-LM fine-tuning. Two implementations ship with the crate: the
//! store-backed [`TinyMlm`](tiny::TinyMlm) reference model, trainable on a CPU,
//! and [`TableLm`](table::TableLm), which replays canned distributions.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::pretraining::MaskedExample;

pub mod store;
pub mod table;
pub mod tiny;
pub mod tokenize;

pub use store::CheckpointStore;
pub use table::TableLm;
pub use tiny::{TinyBackend, TinyMlm};
pub use tokenize::{Tokenize, WordTokenizer};

pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";
/// Candidate budget per query.
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("unknown checkpoint `{0}`")]
    UnknownCheckpoint(CheckpointId),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error("checkpoint directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("checkpoint store I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint at {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

/// Name of a saved model state, e.g. `raw` or `mlm-c0-joint/epoch-3`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckpointId(String);

impl CheckpointId {
    pub const RAW: &'static str = "raw";

    pub fn new(id: impl Into<String>) -> Self {
        CheckpointId(id.into())
    }

    pub fn raw() -> Self {
        CheckpointId::new(Self::RAW)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Id of the checkpoint saved at the end of `epoch` (1-based).
    pub fn epoch(&self, epoch: usize) -> CheckpointId {
        CheckpointId(format!("{}/epoch-{epoch}", self.0))
    }
}

impl fmt::Display for CheckpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CheckpointId {
    fn from(s: &str) -> Self {
        CheckpointId::new(s)
    }
}

/// A prompt with exactly one mask placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskQuery {
    text: String,
    top_k: usize,
}

impl MaskQuery {
    pub fn new(text: impl Into<String>, top_k: usize, mask_token: &str) -> Result<Self, LmError> {
        let text = text.into();
        if top_k == 0 {
            return Err(LmError::Query("top_k must be positive".into()));
        }
        match text.matches(mask_token).count() {
            1 => Ok(MaskQuery { text, top_k }),
            n => Err(LmError::Query(format!(
                "expected exactly one {mask_token} in {text:?}, found {n}"
            ))),
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub token: String,
    pub score: f64,
}

impl ScoredToken {
    pub fn new(token: impl Into<String>, score: f64) -> Self {
        ScoredToken {
            token: token.into(),
            score,
        }
    }
}

/// Single-mask distribution queries.
pub trait FillMask: Send + Sync {
    fn mask_token(&self) -> &str;

    /// The `top_k` most probable tokens for the mask, scores non-increasing.
    fn fill_mask(&self, checkpoint: &CheckpointId, query: &MaskQuery) -> Result<Vec<ScoredToken>, LmError>;

    /// Build and run a query in one step.
    fn query(&self, checkpoint: &CheckpointId, text: &str, top_k: usize) -> Result<Vec<ScoredToken>, LmError> {
        let q = MaskQuery::new(text, top_k, self.mask_token())?;
        self.fill_mask(checkpoint, &q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Settings for gold challenge data alone.
    pub fn gold_only() -> Self {
        TrainConfig {
            learning_rate: 5e-6,
            batch_size: 64,
            epochs: 10,
            seed: 0,
        }
    }

    /// Settings when silver pairs are concatenated to the gold data.
    pub fn with_silver() -> Self {
        TrainConfig {
            epochs: 5,
            ..Self::gold_only()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::gold_only()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOutcome {
    /// The epoch checkpoint with the lowest dev perplexity.
    pub checkpoint: CheckpointId,
    pub selected_epoch: usize,
    pub epochs: Vec<EpochStats>,
}

/// Index of the epoch with the lowest dev perplexity; the earliest wins ties.
pub fn select_epoch(epochs: &[EpochStats]) -> Option<&EpochStats> {
    epochs.iter().fold(None, |best: Option<&EpochStats>, e| match best {
        Some(b) if b.dev_perplexity <= e.dev_perplexity => Some(b),
        _ => Some(e),
    })
}

/// Masked-LM fine-tuning.
pub trait MlmTrainer: Send + Sync {
    /// Fine-tune `base` on `train`, saving one checkpoint per epoch under
    /// `output` and selecting the epoch with the lowest masked-position
    /// perplexity on `dev`.
    fn mlm_finetune(
        &self,
        base: &CheckpointId,
        output: &CheckpointId,
        train: &[MaskedExample],
        dev: &[MaskedExample],
        config: &TrainConfig,
    ) -> Result<FinetuneOutcome, LmError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_needs_exactly_one_mask() {
        assert!(MaskQuery::new("Paris is the capital of [MASK].", 5, "[MASK]").is_ok());
        assert!(matches!(MaskQuery::new("no mask", 5, "[MASK]"), Err(LmError::Query(_))));
        assert!(matches!(MaskQuery::new("[MASK] and [MASK]", 5, "[MASK]"), Err(LmError::Query(_))));
        assert!(MaskQuery::new("[MASK]", 0, "[MASK]").is_err());
    }

    #[test]
    fn train_defaults() {
        let g = TrainConfig::gold_only();
        assert_eq!((g.learning_rate, g.batch_size, g.epochs), (5e-6, 64, 10));
        assert_eq!(TrainConfig::with_silver().epochs, 5);
    }

    #[test]
    fn select_epoch_takes_minimum() {
        let e = |epoch, ppl| EpochStats { epoch, train_loss: 0.0, dev_perplexity: ppl };
        let epochs = [e(1, 9.0), e(2, 4.0), e(3, 4.0), e(4, 6.0)];
        assert_eq!(select_epoch(&epochs).unwrap().epoch, 2);
        assert!(select_epoch(&[]).is_none());
    }

    #[test]
    fn epoch_ids() {
        assert_eq!(CheckpointId::new("mlm-c0-joint").epoch(3).as_str(), "mlm-c0-joint/epoch-3");
    }
}
