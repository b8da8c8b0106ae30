//! Toy decoder-only transformer.
//!
//! Unlike a plain causal LM, [`ModelParams::forward`] takes an explicit
//! attention mask and explicit per-token position indices, so that mask
//! placeholders and interleaved candidates can share a single invocation.

mod cache;
mod checkpoint;
mod forward;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use cache::{compact_cache, KvCache, SlotKind};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use crate::error::{Result, SpaceError};
use crate::math::{Matrix, ParamTensor};
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Includes the mask and EOS tokens.
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_position: usize,
    pub mask_token_id: TokenId,
    pub eos_token_id: TokenId,
    pub seed: u64,
    /// Std of the normal initializer for weights and embeddings.
    pub init_std: f64,
    /// Std of the normal initializer for the mask-token embedding row.
    pub mask_init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 16,
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            d_ff: 64,
            max_position: 128,
            mask_token_id: 1,
            eos_token_id: 0,
            seed: 0,
            init_std: 0.02,
            mask_init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SpaceError::Config(m));
        if self.vocab_size < 3 {
            return fail(format!("vocab_size {} leaves no ordinary tokens", self.vocab_size));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return fail("d_model, n_heads, n_layers and d_ff must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.mask_token_id == self.eos_token_id {
            return fail("mask_token_id must differ from eos_token_id".into());
        }
        if self.mask_token_id as usize >= self.vocab_size
            || self.eos_token_id as usize >= self.vocab_size
        {
            return fail("mask/eos token ids must be < vocab_size".into());
        }
        if self.max_position == 0 {
            return fail("max_position must be positive".into());
        }
        if !(self.init_std >= 0.0 && self.mask_init_std >= 0.0) {
            return fail("init std must be non-negative".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Positions of one block's tensors within [`ModelParams::tensors`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerSlots {
    pub ln1_gamma: usize,
    pub ln1_beta: usize,
    pub w_q: usize,
    pub w_k: usize,
    pub w_v: usize,
    pub w_o: usize,
    pub ln2_gamma: usize,
    pub ln2_beta: usize,
    pub w_1: usize,
    pub b_1: usize,
    pub w_2: usize,
    pub b_2: usize,
}

const PER_LAYER: usize = 12;
pub(crate) const TOKEN_EMBEDDING: usize = 0;
pub(crate) const POSITION_EMBEDDING: usize = 1;

pub(crate) fn layer_slots(layer: usize) -> LayerSlots {
    let b = 2 + layer * PER_LAYER;
    LayerSlots {
        ln1_gamma: b,
        ln1_beta: b + 1,
        w_q: b + 2,
        w_k: b + 3,
        w_v: b + 4,
        w_o: b + 5,
        ln2_gamma: b + 6,
        ln2_beta: b + 7,
        w_1: b + 8,
        b_1: b + 9,
        w_2: b + 10,
        b_2: b + 11,
    }
}

pub(crate) fn final_slots(n_layers: usize) -> (usize, usize, usize) {
    let b = 2 + n_layers * PER_LAYER;
    (b, b + 1, b + 2)
}

/// All trainable weights of the model, in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<ParamTensor>,
}

fn tensor_layout(c: &ModelConfig) -> Vec<(String, usize, usize)> {
    let d = c.d_model;
    let mut out = vec![
        ("tok_emb".to_string(), c.vocab_size, d),
        ("pos_emb".to_string(), c.max_position, d),
    ];
    for l in 0..c.n_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        out.extend([
            (p("ln1.gamma"), 1, d),
            (p("ln1.beta"), 1, d),
            (p("attn.w_q"), d, d),
            (p("attn.w_k"), d, d),
            (p("attn.w_v"), d, d),
            (p("attn.w_o"), d, d),
            (p("ln2.gamma"), 1, d),
            (p("ln2.beta"), 1, d),
            (p("mlp.w_1"), d, c.d_ff),
            (p("mlp.b_1"), 1, c.d_ff),
            (p("mlp.w_2"), c.d_ff, d),
            (p("mlp.b_2"), 1, d),
        ]);
    }
    out.extend([
        ("ln_f.gamma".to_string(), 1, d),
        ("ln_f.beta".to_string(), 1, d),
        ("lm_head".to_string(), d, c.vocab_size),
    ]);
    out
}

/// Deterministic initialization from `config.seed`.
pub fn init_model(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_std)
        .map_err(|e| SpaceError::Config(format!("init_std: {e}")))?;
    let mask_normal = Normal::new(0.0, config.mask_init_std)
        .map_err(|e| SpaceError::Config(format!("mask_init_std: {e}")))?;

    let mut tensors = Vec::new();
    for (name, rows, cols) in tensor_layout(config) {
        let value = if name.ends_with("gamma") {
            Matrix::filled(rows, cols, 1.0)
        } else if name.ends_with("beta") || name.contains(".b_") {
            Matrix::zeros(rows, cols)
        } else {
            let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
            Matrix::from_vec(rows, cols, data)?
        };
        tensors.push(ParamTensor::new(name, value));
    }
    let mask_row = config.mask_token_id as usize;
    for v in tensors[TOKEN_EMBEDDING].value.row_mut(mask_row) {
        *v = mask_normal.sample(&mut rng);
    }
    Ok(ModelParams {
        config: config.clone(),
        tensors,
    })
}

impl ModelParams {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        init_model(config)
    }

    /// Builds params from explicit tensors, checking names and shapes.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<(String, Matrix)>) -> Result<Self> {
        config.validate()?;
        let layout = tensor_layout(&config);
        if layout.len() != tensors.len() {
            return Err(SpaceError::Format(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        let mut out = Vec::with_capacity(layout.len());
        for ((name, r, c), (got_name, m)) in layout.into_iter().zip(tensors) {
            if name != got_name || m.shape() != (r, c) {
                return Err(SpaceError::Format(format!(
                    "tensor {got_name} {:?} does not match expected {name} ({r}, {c})",
                    m.shape()
                )));
            }
            out.push(ParamTensor::new(name, m));
        }
        Ok(ModelParams {
            config,
            tensors: out,
        })
    }

    pub fn values(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|t| t.value.clone()).collect()
    }

    pub fn set_values(&mut self, values: &[Matrix]) {
        for (t, v) in self.tensors.iter_mut().zip(values) {
            t.value = v.clone();
        }
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(ParamTensor::zero_grad);
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data().len()).sum()
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for v in t.value.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn token_embedding(&self) -> &Matrix {
        &self.tensors[TOKEN_EMBEDDING].value
    }

    /// A model whose next-token prediction depends only on the current token:
    /// token `t` predicts `successor[t]` (one entry per vocabulary id, the mask
    /// token included). Attention and feed-forward outputs are zeroed, so mask
    /// slots draft `successor[mask_token_id]` regardless of context.
    ///
    /// Requires `d_model > vocab_size`. Used to build decoding fixtures with a
    /// known acceptance behaviour.
    pub fn successor_table(
        config: &ModelConfig,
        successor: &[TokenId],
        strength: f64,
    ) -> Result<Self> {
        config.validate()?;
        let v = config.vocab_size;
        if config.d_model <= v {
            return Err(SpaceError::Config(format!(
                "successor_table needs d_model > vocab_size ({} <= {v})",
                config.d_model
            )));
        }
        if successor.len() != v || successor.iter().any(|&s| s as usize >= v) {
            return Err(SpaceError::Config("successor table must map every token into the vocabulary".into()));
        }
        let mut params = init_model(config)?;
        for t in params.tensors.iter_mut() {
            let keep_identity = t.name.ends_with("gamma");
            if !keep_identity {
                t.value.data_mut().fill(0.0);
            }
        }
        let emb = &mut params.tensors[TOKEN_EMBEDDING].value;
        for t in 0..v {
            emb.set(t, t, 1.0);
        }
        let (_, _, head) = final_slots(config.n_layers);
        let lm = &mut params.tensors[head].value;
        for (t, &s) in successor.iter().enumerate() {
            lm.set(t, s as usize, strength);
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let c = ModelConfig::default();
        let a = init_model(&c).unwrap();
        let b = init_model(&c).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a, b);
        let other = init_model(&ModelConfig { seed: 1, ..c }).unwrap();
        assert_ne!(a.checksum(), other.checksum());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_heads = ModelConfig {
            d_model: 30,
            n_heads: 4,
            ..Default::default()
        };
        assert!(matches!(init_model(&bad_heads), Err(SpaceError::Config(_))));
        let same_ids = ModelConfig {
            mask_token_id: 0,
            ..Default::default()
        };
        assert!(init_model(&same_ids).is_err());
        let out_of_vocab = ModelConfig {
            mask_token_id: 16,
            ..Default::default()
        };
        assert!(init_model(&out_of_vocab).is_err());
    }

    #[test]
    fn mask_row_sample_std() {
        for seed in 0..5 {
            let c = ModelConfig {
                d_model: 64,
                n_heads: 4,
                mask_init_std: 0.3,
                seed,
                ..Default::default()
            };
            let p = init_model(&c).unwrap();
            let row = p.token_embedding().row(c.mask_token_id as usize);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (row.len() - 1) as f64;
            let std = var.sqrt();
            assert!((std - 0.3).abs() <= 0.3 * 0.3, "seed {seed}: std {std}");
        }
    }

    #[test]
    fn tensor_count_matches_layout() {
        let c = ModelConfig::default();
        let p = init_model(&c).unwrap();
        assert_eq!(p.tensors.len(), 2 + 12 * c.n_layers + 3);
        assert_eq!(p.tensors[final_slots(c.n_layers).2].name, "lm_head");
        assert_eq!(p.tensors[layer_slots(1).b_2].name, "layers.1.mlp.b_2");
    }
}
