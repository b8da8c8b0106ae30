//! Auto-correct decoding and the autoregressive baseline.
//!
//! Each SPACE step runs one forward over the extended layout. The rows at the
//! last output slot and at each candidate slot verify the pending candidates;
//! the mask group that follows the last accepted candidate drafts the next `k`
//! candidates. A step therefore emits between 1 and `k + 1` tokens.

mod generate;
mod sampling;
mod trace;
mod verify;

use serde::{Deserialize, Serialize};

pub use generate::{
    ar_generate, ar_generate_with_rng, space_generate, space_generate_with_rng, space_step,
    StepOutcome,
};
pub use sampling::{argmax, sample_from, sample_token, warp, Sampling};
pub use trace::{DecodeTrace, StepRecord};
pub use verify::{verify_candidates, Verdict};

use crate::error::{Result, SpaceError};
use crate::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verification {
    /// Rejection sampling with a `normalize(max(0, q − p))` replacement draw.
    LosslessResidual,
    /// Rejection sampling, replacement drawn from `q` unmodified.
    PaperLiteral,
    /// Accept while the candidate equals the verify row's argmax.
    GreedyMatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub k: usize,
    pub sampling: Sampling,
    pub verification: Verification,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            k: 5,
            sampling: Sampling::default(),
            verification: Verification::LosslessResidual,
            max_new_tokens: 64,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn greedy(k: usize, max_new_tokens: usize) -> Self {
        DecodeConfig {
            k,
            sampling: Sampling::Greedy,
            verification: Verification::GreedyMatch,
            max_new_tokens,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(SpaceError::Config("k must be at least 1".into()));
        }
        self.sampling.validate()?;
        let ok = match self.sampling {
            Sampling::Greedy => self.verification == Verification::GreedyMatch,
            Sampling::Stochastic { .. } => self.verification != Verification::GreedyMatch,
        };
        if !ok {
            return Err(SpaceError::Config(format!(
                "{:?} verification is incompatible with {:?} sampling",
                self.verification, self.sampling
            )));
        }
        Ok(())
    }
}

/// Pending candidates and the draft distributions they were sampled from.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateState {
    pub tokens: Vec<TokenId>,
    /// `probs[i] == dists[i][tokens[i]]`.
    pub probs: Vec<f64>,
    pub dists: Vec<Vec<f64>>,
    /// First-step placeholder: every candidate is rejected.
    pub sentinel: bool,
}

impl CandidateState {
    /// Placeholder state for the first step. `filler` must not be the mask token.
    pub fn sentinel(k: usize, filler: TokenId) -> Self {
        CandidateState {
            tokens: vec![filler; k],
            probs: vec![f64::INFINITY; k],
            dists: Vec::new(),
            sentinel: true,
        }
    }

    pub fn k(&self) -> usize {
        self.tokens.len()
    }
}
