use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::sampling::{argmax, sample_from, sample_token, warp};
use crate::decoder::verify::verify_candidates;
use crate::decoder::{CandidateState, DecodeConfig, DecodeTrace, Sampling};
use crate::error::{Result, SpaceError};
use crate::layout::{build_layout, DecodeLayout};
use crate::math::{BoolMatrix, Matrix};
use crate::model::{KvCache, ModelParams, SlotKind};
use crate::TokenId;

/// Result of one auto-correct step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Accepted candidates followed by the extra token.
    pub emitted: Vec<TokenId>,
    pub accepted: usize,
    pub state: CandidateState,
    /// Layout that was run through the model.
    pub layout: DecodeLayout,
    /// Layout slot of the first row in `probs` (slots before it came from the cache).
    pub rows_start: usize,
    /// Model output for slots `rows_start..layout.len()`.
    pub probs: Matrix,
}

fn check_prompt(params: &ModelParams, prompt: &[TokenId]) -> Result<()> {
    if prompt.is_empty() {
        return Err(SpaceError::Layout("prompt is empty".into()));
    }
    if prompt.contains(&params.config.mask_token_id) {
        return Err(SpaceError::Layout("prompt contains the mask token".into()));
    }
    Ok(())
}

/// Baseline: one token per invocation, incremental through a KV cache.
/// Returns the generated tokens (EOS excluded) and the number of invocations.
pub fn ar_generate(
    params: &ModelParams,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<(Vec<TokenId>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    ar_generate_with_rng(params, prompt, &config.sampling, config.max_new_tokens, &mut rng)
}

pub fn ar_generate_with_rng<R: Rng + ?Sized>(
    params: &ModelParams,
    prompt: &[TokenId],
    sampling: &Sampling,
    max_new_tokens: usize,
    rng: &mut R,
) -> Result<(Vec<TokenId>, usize)> {
    check_prompt(params, prompt)?;
    sampling.validate()?;
    let c = &params.config;
    let mut out = Vec::new();
    let mut invocations = 0;
    if max_new_tokens == 0 {
        return Ok((out, 0));
    }
    let mut cache = KvCache::new(c.n_layers, c.d_model);
    let positions: Vec<usize> = (0..prompt.len()).collect();
    let mut probs = params.forward(prompt, &BoolMatrix::causal(prompt.len()), &positions, Some(&mut cache))?;
    loop {
        invocations += 1;
        let next = sample_token(probs.row(probs.rows() - 1), sampling, rng);
        if next == c.eos_token_id {
            break;
        }
        out.push(next);
        if out.len() >= max_new_tokens {
            break;
        }
        let slot = cache.len();
        let mask = BoolMatrix::from_fn(1, slot + 1, |_, _| true);
        probs = params.forward(&[next], &mask, &[slot], Some(&mut cache))?;
    }
    Ok((out, invocations))
}

/// One auto-correct decoding step over `output` (prompt plus everything
/// generated so far).
///
/// `cache` must hold keys/values for a prefix of `output`; on return it holds
/// exactly the output slots plus the accepted candidates. The extra token is
/// never cached, since it has not been through the model yet.
pub fn space_step<R: Rng + ?Sized>(
    params: &ModelParams,
    output: &[TokenId],
    state: &CandidateState,
    config: &DecodeConfig,
    cache: &mut KvCache,
    rng: &mut R,
) -> Result<StepOutcome> {
    let k = config.k;
    if state.k() != k {
        return Err(SpaceError::Config(format!(
            "candidate state holds {} tokens, k = {k}",
            state.k()
        )));
    }
    let l = output.len();
    if l == 0 {
        return Err(SpaceError::Layout("output is empty".into()));
    }
    // The last output slot's row verifies c_1, so it is always recomputed.
    if cache.len() >= l {
        cache.truncate(l - 1)?;
    }
    let fresh = cache.is_empty();

    let layout = build_layout(output, &state.tokens, k, params.config.mask_token_id)?;
    let start = cache.len();
    let probs = params.forward(
        &layout.tokens[start..],
        &layout.attn_mask.tail_rows(start),
        &layout.positions[start..],
        Some(cache),
    )?;
    let row = |slot: usize| probs.row(slot - start);

    let q_rows: Vec<&[f64]> = (0..=k).map(|i| row(layout.verify_row(i))).collect();
    let verdict = verify_candidates(&q_rows, state, config, rng)?;
    let accepted = verdict.accepted;
    let extra = match config.sampling {
        Sampling::Greedy => argmax(&verdict.next_dist),
        Sampling::Stochastic { .. } => sample_from(&verdict.next_dist, rng),
    };
    let mut emitted = state.tokens[..accepted].to_vec();
    emitted.push(extra);

    // Group `accepted` saw the output and c_1..c_accepted; its j-th mask drafts
    // the token j + 1 places after the extra token's predecessor.
    let mut next = CandidateState {
        tokens: Vec::with_capacity(k),
        probs: Vec::with_capacity(k),
        dists: Vec::with_capacity(k),
        sentinel: false,
    };
    for slot in layout.group_slots(accepted) {
        let (token, dist) = match config.sampling {
            Sampling::Greedy => {
                let d = row(slot).to_vec();
                (argmax(&d), d)
            }
            Sampling::Stochastic { .. } => {
                let d = warp(row(slot), &config.sampling);
                (sample_from(&d, rng), d)
            }
        };
        next.tokens.push(token);
        next.probs.push(dist[token as usize]);
        next.dists.push(dist);
    }

    for slot in start..l {
        cache.set_kind(slot, if fresh { SlotKind::Prompt } else { SlotKind::Accepted })?;
    }
    for &slot in &layout.candidate_positions {
        cache.set_kind(slot, SlotKind::Candidate)?;
    }
    let keep: Vec<usize> = (0..l)
        .chain(layout.candidate_positions[..accepted].iter().copied())
        .collect();
    *cache = cache.compact(&keep)?;
    for slot in l..l + accepted {
        cache.set_kind(slot, SlotKind::Accepted)?;
    }

    Ok(StepOutcome {
        emitted,
        accepted,
        state: next,
        layout,
        rows_start: start,
        probs,
    })
}

/// Runs auto-correct decoding until EOS or `max_new_tokens`.
///
/// Output is truncated before EOS and to the token budget; the trace keeps the
/// untruncated per-step emissions and counts.
pub fn space_generate(
    params: &ModelParams,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<(Vec<TokenId>, DecodeTrace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    space_generate_with_rng(params, prompt, config, &mut rng)
}

pub fn space_generate_with_rng<R: Rng + ?Sized>(
    params: &ModelParams,
    prompt: &[TokenId],
    config: &DecodeConfig,
    rng: &mut R,
) -> Result<(Vec<TokenId>, DecodeTrace)> {
    config.validate()?;
    check_prompt(params, prompt)?;
    let c = &params.config;
    let mut trace = DecodeTrace::default();
    let mut generated: Vec<TokenId> = Vec::new();
    if config.max_new_tokens == 0 {
        return Ok((generated, trace));
    }

    let mut state = CandidateState::sentinel(config.k, c.eos_token_id);
    let mut cache = KvCache::new(c.n_layers, c.d_model);
    let mut output = prompt.to_vec();
    loop {
        let step = space_step(params, &output, &state, config, &mut cache, rng)?;
        trace.record(step.accepted, step.emitted.clone());
        generated.extend_from_slice(&step.emitted);
        output.extend_from_slice(&step.emitted);
        state = step.state;

        if let Some(eos) = generated.iter().position(|&t| t == c.eos_token_id) {
            generated.truncate(eos.min(config.max_new_tokens));
            break;
        }
        if generated.len() >= config.max_new_tokens {
            generated.truncate(config.max_new_tokens);
            break;
        }
    }
    Ok((generated, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::Verification;
    use crate::model::{init_model, ModelConfig};

    fn small_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 8,
            d_model: 16,
            n_heads: 2,
            init_std: 0.6,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn zero_budget() {
        let m = init_model(&small_config()).unwrap();
        let cfg = DecodeConfig {
            max_new_tokens: 0,
            ..DecodeConfig::greedy(2, 0)
        };
        assert_eq!(ar_generate(&m, &[2, 3], &cfg).unwrap(), (vec![], 0));
        let (out, trace) = space_generate(&m, &[2, 3], &cfg).unwrap();
        assert!(out.is_empty());
        assert_eq!(trace.invocations, 0);
    }

    #[test]
    fn always_eos_model() {
        let c = ModelConfig {
            d_model: 16,
            vocab_size: 8,
            ..Default::default()
        };
        let m = ModelParams::successor_table(&c, &[0; 8], 30.0).unwrap();
        let cfg = DecodeConfig::greedy(3, 10);
        assert_eq!(ar_generate(&m, &[2, 3], &cfg).unwrap(), (vec![], 1));
        let (out, trace) = space_generate(&m, &[2, 3], &cfg).unwrap();
        assert!(out.is_empty());
        assert_eq!(trace.invocations, 1);
    }

    #[test]
    fn first_step_emits_one_and_bounds_hold() {
        let m = init_model(&small_config()).unwrap();
        for k in 1..=4 {
            let cfg = DecodeConfig {
                k,
                sampling: Sampling::untruncated(),
                verification: Verification::LosslessResidual,
                max_new_tokens: 20,
                seed: k as u64,
            };
            let (_, trace) = space_generate(&m, &[2, 5, 3], &cfg).unwrap();
            assert_eq!(trace.steps[0].emitted.len(), 1);
            for s in &trace.steps {
                assert!((1..=k + 1).contains(&s.emitted.len()));
                assert_eq!(s.emitted.len(), s.accepted + 1);
            }
            let avg = trace.avg_accepted_tokens();
            assert!(avg >= 1.0 && avg <= (k + 1) as f64);
        }
    }

    #[test]
    fn stochastic_ar_is_reproducible() {
        let m = init_model(&small_config()).unwrap();
        let cfg = DecodeConfig {
            max_new_tokens: 12,
            seed: 99,
            ..Default::default()
        };
        assert_eq!(ar_generate(&m, &[2, 3], &cfg).unwrap(), ar_generate(&m, &[2, 3], &cfg).unwrap());
    }

    #[test]
    fn draft_coherence_after_steps() {
        let m = init_model(&small_config()).unwrap();
        let cfg = DecodeConfig {
            k: 3,
            sampling: Sampling::default(),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cache = KvCache::new(2, 16);
        let mut output = vec![2, 4];
        let mut state = CandidateState::sentinel(3, 0);
        for _ in 0..6 {
            let s = space_step(&m, &output, &state, &cfg, &mut cache, &mut rng).unwrap();
            for i in 0..3 {
                assert_eq!(s.state.probs[i], s.state.dists[i][s.state.tokens[i] as usize]);
            }
            output.extend_from_slice(&s.emitted);
            assert_eq!(cache.len(), output.len() - 1);
            state = s.state;
        }
    }

    #[test]
    fn rejects_mask_in_prompt() {
        let m = init_model(&small_config()).unwrap();
        let cfg = DecodeConfig::greedy(2, 4);
        assert!(space_generate(&m, &[2, 1], &cfg).is_err());
        assert!(ar_generate(&m, &[1], &cfg).is_err());
    }
}
