//! Semi-autoregressive supervised fine-tuning.
//!
//! The only change from plain SFT is in the data path: with probability
//! `1 − p_ar` a sample is cut at a random answer position `m`, `k` mask
//! tokens are appended, and the model is supervised to predict
//! `y_m..y_{m+k}` from the last real token and the `k` masks.

mod corpus;
mod loss;
mod masking;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

pub use corpus::{read_corpus, synth_corpus, write_corpus, CorpusKind, TokenSpace};
pub use loss::{batch_loss, loss_and_grad, sar_loss, sar_loss_sum};
pub use masking::{apply_sar_masking, MaskedSample};
pub use optim::{clip_global_norm, cosine_lr, Adam};
pub use train::{sample_rng, train, EpochSummary, TrainOutcome};

use crate::error::{Result, SpaceError};
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub prompt: Vec<TokenId>,
    pub answer: Vec<TokenId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SarSftConfig {
    pub k: usize,
    pub p_ar: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    /// Global gradient-norm clip; 0 disables.
    pub gradient_clip: f64,
    pub seed: u64,
}

impl Default for SarSftConfig {
    fn default() -> Self {
        SarSftConfig {
            k: 5,
            p_ar: 0.5,
            learning_rate: 3e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 20,
            batch_size: 4,
            schedule: Schedule::Cosine,
            gradient_clip: 1.0,
            seed: 0,
        }
    }
}

impl SarSftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(SpaceError::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_ar) {
            return Err(SpaceError::Config(format!("p_ar {} outside [0, 1]", self.p_ar)));
        }
        if self.batch_size == 0 {
            return Err(SpaceError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(SpaceError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// `p_ar = 1` never masks: the run is ordinary SFT.
    pub fn is_plain_sft(&self) -> bool {
        self.p_ar >= 1.0
    }
}
