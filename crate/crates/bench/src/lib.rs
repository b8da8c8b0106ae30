//! Fixtures shared by the criterion benchmarks.

use space_core::{init_model, ModelConfig, ModelParams, Result, TokenId};

/// Random model at the size used throughout the benchmarks.
pub fn bench_model(seed: u64) -> Result<ModelParams> {
    init_model(&ModelConfig {
        vocab_size: 16,
        d_model: 32,
        n_layers: 2,
        n_heads: 2,
        d_ff: 64,
        max_position: 256,
        init_std: 0.3,
        seed,
        ..Default::default()
    })
}

/// A model that always predicts `token`, so every draft is accepted.
pub fn constant_model(token: TokenId) -> Result<ModelParams> {
    let config = ModelConfig {
        vocab_size: 16,
        d_model: 32,
        max_position: 256,
        ..Default::default()
    };
    ModelParams::successor_table(&config, &[token; 16], 30.0)
}

pub fn prompt(len: usize) -> Vec<TokenId> {
    (0..len as TokenId).map(|i| 2 + i % 14).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use space_core::{space_generate, DecodeConfig};

    #[test]
    fn constant_model_accepts_every_draft() {
        let params = constant_model(7).unwrap();
        let (out, trace) = space_generate(&params, &prompt(4), &DecodeConfig::greedy(4, 21)).unwrap();
        assert_eq!(out, vec![7; 21]);
        assert_eq!(trace.invocations, 5);
    }

    #[test]
    fn prompts_avoid_special_tokens() {
        assert!(prompt(40).iter().all(|&t| (2..16).contains(&t)));
        assert!(bench_model(1).is_ok());
    }
}
