use crate::error::{Result, SpaceError};
use crate::math::{layer_norm_rows, BoolMatrix, Matrix, Tape, Var, MASKED_LOGIT};
use crate::model::{
    final_slots, layer_slots, KvCache, ModelParams, SlotKind, POSITION_EMBEDDING,
    TOKEN_EMBEDDING,
};
use crate::TokenId;

impl ModelParams {
    fn check_inputs(
        &self,
        tokens: &[TokenId],
        attn_mask: &BoolMatrix,
        positions: &[usize],
        cached: usize,
    ) -> Result<()> {
        let n = tokens.len();
        if n == 0 {
            return Err(SpaceError::Layout("empty input".into()));
        }
        if positions.len() != n {
            return Err(SpaceError::Layout(format!(
                "{} positions for {n} tokens",
                positions.len()
            )));
        }
        if attn_mask.rows() != n || attn_mask.cols() != cached + n {
            return Err(SpaceError::Layout(format!(
                "attention mask is {}x{}, expected {n}x{}",
                attn_mask.rows(),
                attn_mask.cols(),
                cached + n
            )));
        }
        for r in 0..n {
            if attn_mask.row_sum(r) == 0 {
                return Err(SpaceError::Layout(format!("attention mask row {r} is all zero")));
            }
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(SpaceError::Index {
                index: t as usize,
                len: self.config.vocab_size,
            });
        }
        if let Some(&p) = positions.iter().find(|&&p| p >= self.config.max_position) {
            return Err(SpaceError::Config(format!(
                "position {p} exceeds max_position {}",
                self.config.max_position
            )));
        }
        Ok(())
    }

    /// Row to add to output logits: suppresses the mask token, which is never
    /// a valid next token.
    fn output_bias(&self) -> Matrix {
        let mut bias = Matrix::zeros(1, self.config.vocab_size);
        bias.set(0, self.config.mask_token_id as usize, MASKED_LOGIT);
        bias
    }

    /// Next-token distributions, one row per input token.
    ///
    /// Row `i` conditions exactly on the slots `j` with `attn_mask[i][j]`. With
    /// a cache, mask columns cover the cached slots followed by the new tokens,
    /// and the new slots' keys and values are appended to the cache.
    pub fn forward(
        &self,
        tokens: &[TokenId],
        attn_mask: &BoolMatrix,
        positions: &[usize],
        cache: Option<&mut KvCache>,
    ) -> Result<Matrix> {
        let c = &self.config;
        let mut scratch;
        let cache = match cache {
            Some(cache) => cache,
            None => {
                scratch = KvCache::new(c.n_layers, c.d_model);
                &mut scratch
            }
        };
        if cache.n_layers() != c.n_layers {
            return Err(SpaceError::Config(format!(
                "cache has {} layers, model has {}",
                cache.n_layers(),
                c.n_layers
            )));
        }
        self.check_inputs(tokens, attn_mask, positions, cache.len())?;

        let t = |i: usize| &self.tensors[i].value;
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let additive = attn_mask.to_additive();
        let dh = c.head_dim();
        let att_scale = 1.0 / (dh as f64).sqrt();

        let mut x = t(TOKEN_EMBEDDING)
            .gather_rows(&ids)?
            .add(&t(POSITION_EMBEDDING).gather_rows(positions)?)?;
        for layer in 0..c.n_layers {
            let s = layer_slots(layer);
            let h = layer_norm_rows(&x, t(s.ln1_gamma), t(s.ln1_beta))?.output;
            let q = h.matmul(t(s.w_q))?;
            let k = h.matmul(t(s.w_k))?;
            let v = h.matmul(t(s.w_v))?;
            cache.keys[layer] = cache.keys[layer].concat_rows(&k)?;
            cache.values[layer] = cache.values[layer].concat_rows(&v)?;
            let keys = &cache.keys[layer];
            let values = &cache.values[layer];

            let mut heads = Vec::with_capacity(c.n_heads);
            for head in 0..c.n_heads {
                let qh = q.slice_cols(head * dh, dh)?;
                let kh = keys.slice_cols(head * dh, dh)?;
                let vh = values.slice_cols(head * dh, dh)?;
                let scores = qh.matmul_bt(&kh)?.scale(att_scale);
                let att = scores.masked_softmax_rows(&additive)?;
                heads.push(att.matmul(&vh)?);
            }
            let refs: Vec<&Matrix> = heads.iter().collect();
            let attn = Matrix::concat_cols(&refs)?.matmul(t(s.w_o))?;
            x = x.add(&attn)?;

            let h2 = layer_norm_rows(&x, t(s.ln2_gamma), t(s.ln2_beta))?.output;
            let ff = h2
                .matmul(t(s.w_1))?
                .add_row(t(s.b_1))?
                .map(crate::math::gelu)
                .matmul(t(s.w_2))?
                .add_row(t(s.b_2))?;
            x = x.add(&ff)?;
        }
        let (gf, bf, head) = final_slots(c.n_layers);
        let h = layer_norm_rows(&x, t(gf), t(bf))?.output;
        let logits = h.matmul(t(head))?.add_row(&self.output_bias())?;

        let kinds: Vec<SlotKind> = tokens
            .iter()
            .map(|&tok| {
                if tok == c.mask_token_id {
                    SlotKind::Mask
                } else {
                    SlotKind::Prompt
                }
            })
            .collect();
        cache.push_slots(positions, &kinds);
        Ok(logits.softmax_rows())
    }

    /// Plain causal forward with consecutive positions `0..n`.
    pub fn forward_causal(&self, tokens: &[TokenId]) -> Result<Matrix> {
        let n = tokens.len();
        let positions: Vec<usize> = (0..n).collect();
        self.forward(tokens, &BoolMatrix::causal(n), &positions, None)
    }

    /// Records a forward pass on `tape`, with `params[i]` pushed as leaves.
    /// Returns the output logits (mask token suppressed) and the parameter vars.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        tokens: &[TokenId],
        attn_mask: &BoolMatrix,
        positions: &[usize],
    ) -> Result<(Var, Vec<Var>)> {
        self.check_inputs(tokens, attn_mask, positions, 0)?;
        let c = &self.config;
        let p: Vec<Var> = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.value.clone()))
            .collect();
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let additive = attn_mask.to_additive();
        let dh = c.head_dim();
        let att_scale = 1.0 / (dh as f64).sqrt();

        let tok = tape.gather_rows(p[TOKEN_EMBEDDING], &ids)?;
        let pos = tape.gather_rows(p[POSITION_EMBEDDING], positions)?;
        let mut x = tape.add(tok, pos)?;
        for layer in 0..c.n_layers {
            let s = layer_slots(layer);
            let h = tape.layer_norm(x, p[s.ln1_gamma], p[s.ln1_beta])?;
            let q = tape.matmul(h, p[s.w_q])?;
            let k = tape.matmul(h, p[s.w_k])?;
            let v = tape.matmul(h, p[s.w_v])?;
            let mut heads = Vec::with_capacity(c.n_heads);
            for head in 0..c.n_heads {
                let qh = tape.slice_cols(q, head * dh, dh)?;
                let kh = tape.slice_cols(k, head * dh, dh)?;
                let vh = tape.slice_cols(v, head * dh, dh)?;
                let scores = tape.matmul_bt(qh, kh)?;
                let scores = tape.scale(scores, att_scale);
                let att = tape.masked_softmax(scores, &additive)?;
                heads.push(tape.matmul(att, vh)?);
            }
            let cat = tape.concat_cols(&heads)?;
            let attn = tape.matmul(cat, p[s.w_o])?;
            x = tape.add(x, attn)?;

            let h2 = tape.layer_norm(x, p[s.ln2_gamma], p[s.ln2_beta])?;
            let f = tape.matmul(h2, p[s.w_1])?;
            let f = tape.add_row(f, p[s.b_1])?;
            let f = tape.gelu(f);
            let f = tape.matmul(f, p[s.w_2])?;
            let f = tape.add_row(f, p[s.b_2])?;
            x = tape.add(x, f)?;
        }
        let (gf, bf, head) = final_slots(c.n_layers);
        let h = tape.layer_norm(x, p[gf], p[bf])?;
        let logits = tape.matmul(h, p[head])?;
        let bias = tape.leaf(self.output_bias());
        let logits = tape.add_row(logits, bias)?;
        Ok((logits, p))
    }
}
