use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub accepted: usize,
    pub emitted: Vec<TokenId>,
}

/// Per-step record of a generation. Counts are taken before any truncation
/// at EOS or at the token budget, so `tokens_generated` is the sum of emitted
/// tokens over all steps.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<StepRecord>,
    pub invocations: usize,
    pub tokens_generated: usize,
}

impl DecodeTrace {
    pub fn record(&mut self, accepted: usize, emitted: Vec<TokenId>) {
        self.invocations += 1;
        self.tokens_generated += emitted.len();
        self.steps.push(StepRecord {
            step: self.steps.len(),
            accepted,
            emitted,
        });
    }

    /// Tokens generated per model invocation (0 when nothing ran).
    pub fn avg_accepted_tokens(&self) -> f64 {
        if self.invocations == 0 {
            0.0
        } else {
            self.tokens_generated as f64 / self.invocations as f64
        }
    }

    /// `hist[n]` = number of steps that emitted `n` tokens, for `n` in `0..=k+1`.
    pub fn emitted_histogram(&self, k: usize) -> Vec<usize> {
        let mut hist = vec![0; k + 2];
        for s in &self.steps {
            let n = s.emitted.len().min(k + 1);
            hist[n] += 1;
        }
        hist
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
