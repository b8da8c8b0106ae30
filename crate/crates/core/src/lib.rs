//! Semi-autoregressive fine-tuning and auto-correct parallel decoding for a
//! small causal transformer.
//!
//! The crate covers the full loop at desk scale:
//!
//! - [`math`]: dense matrices, a reverse-mode tape and a gradient checker.
//! - [`model`]: a decoder-only transformer taking an explicit attention mask
//!   and explicit position indices, with a compactable KV cache.
//! - [`layout`]: the extended input that lets one invocation verify the pending
//!   candidates and draft the next ones.
//! - [`decoder`]: auto-correct decoding and the autoregressive baseline.
//! - [`sarsft`]: mask-placeholder fine-tuning and synthetic corpora.
//! - [`oracle`]: exact enumeration and total-variation checks of losslessness.
//! - [`bench`]: accepted-token and speedup metrics, and the `k` sweep.

pub mod bench;
pub mod decoder;
pub mod error;
pub mod layout;
pub mod math;
pub mod model;
pub mod oracle;
pub mod sarsft;

pub type TokenId = u32;

pub use decoder::{
    ar_generate, space_generate, space_step, CandidateState, DecodeConfig, DecodeTrace, Sampling,
    Verification,
};
pub use error::{Result, SpaceError};
pub use layout::{build_layout, DecodeLayout};
pub use math::{BoolMatrix, Matrix};
pub use model::{init_model, KvCache, ModelConfig, ModelParams};
