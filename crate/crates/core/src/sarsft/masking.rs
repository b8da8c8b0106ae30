use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sarsft::TrainingSample;
use crate::TokenId;

/// A training sequence with per-position next-token targets.
///
/// Position `i` is supervised to predict `targets[i]` iff `loss_mask[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub tokens: Vec<TokenId>,
    pub targets: Vec<TokenId>,
    pub loss_mask: Vec<bool>,
    pub prompt_len: usize,
    /// 1-based answer index `m` replaced by masks, `None` for an AR sample.
    pub masked_at: Option<usize>,
    pub k: usize,
}

impl MaskedSample {
    pub fn supervised(&self) -> Vec<Option<usize>> {
        self.targets
            .iter()
            .zip(&self.loss_mask)
            .map(|(&t, &on)| on.then_some(t as usize))
            .collect()
    }

    pub fn supervised_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&b| b).count()
    }

    /// Plain AR sample: every answer token supervised from its predecessor.
    pub fn autoregressive(sample: &TrainingSample) -> Self {
        let x = sample.prompt.len();
        let n = sample.answer.len();
        let mut tokens = sample.prompt.clone();
        tokens.extend_from_slice(&sample.answer);
        let mut targets = vec![0; tokens.len()];
        let mut loss_mask = vec![false; tokens.len()];
        for t in 0..n {
            // y_{t+1} is predicted at the slot just before it
            targets[x + t - 1] = sample.answer[t];
            loss_mask[x + t - 1] = true;
        }
        MaskedSample {
            tokens,
            targets,
            loss_mask,
            prompt_len: x,
            masked_at: None,
            k: 0,
        }
    }

    /// Masked at 1-based answer position `m` (`1 ≤ m ≤ N − k`): the answer part
    /// becomes `y_1..y_{m−1}, M×k`, and the last real slot plus the `k` masks
    /// are supervised with `y_m..y_{m+k}`.
    pub fn masked(sample: &TrainingSample, k: usize, m: usize, mask_token_id: TokenId) -> Self {
        let x = sample.prompt.len();
        let y = &sample.answer;
        debug_assert!(m >= 1 && m + k <= y.len());
        let mut tokens = sample.prompt.clone();
        tokens.extend_from_slice(&y[..m - 1]);
        tokens.extend(std::iter::repeat_n(mask_token_id, k));
        let mut targets = vec![0; tokens.len()];
        let mut loss_mask = vec![false; tokens.len()];
        // t = 1..m+k (1-based) is predicted at slot x + t − 2
        for t in 1..=m + k {
            let slot = x + t - 2;
            targets[slot] = y[t - 1];
            loss_mask[slot] = true;
        }
        MaskedSample {
            tokens,
            targets,
            loss_mask,
            prompt_len: x,
            masked_at: Some(m),
            k,
        }
    }
}

/// The masking data path. Draws one uniform to pick the branch; on the masking
/// branch draws `m` uniformly from `1..=N−k`. Answers shorter than `k + 1` always
/// stay autoregressive.
pub fn apply_sar_masking<R: Rng + ?Sized>(
    sample: &TrainingSample,
    k: usize,
    p_ar: f64,
    mask_token_id: TokenId,
    rng: &mut R,
) -> MaskedSample {
    let u: f64 = rng.gen();
    let n = sample.answer.len();
    if u < p_ar || k == 0 || n < k + 1 || sample.prompt.is_empty() {
        return MaskedSample::autoregressive(sample);
    }
    let m = rng.gen_range(1..=n - k);
    MaskedSample::masked(sample, k, m, mask_token_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const M: TokenId = 1;

    fn sample() -> TrainingSample {
        TrainingSample {
            prompt: vec![20, 21],
            answer: vec![11, 12, 13, 14, 15, 16],
        }
    }

    #[test]
    fn masked_n6_k2_m3() {
        let s = MaskedSample::masked(&sample(), 2, 3, M);
        assert_eq!(s.tokens, vec![20, 21, 11, 12, M, M]);
        let sup: Vec<(usize, TokenId)> = (0..s.tokens.len())
            .filter(|&i| s.loss_mask[i])
            .map(|i| (i, s.targets[i]))
            .collect();
        // AR part: y1 from x2, y2 from y1; SAR part: y3,y4,y5 at the last three slots
        assert_eq!(sup, vec![(1, 11), (2, 12), (3, 13), (4, 14), (5, 15)]);
        assert!(!s.loss_mask[0]);
    }

    #[test]
    fn autoregressive_supervises_answer_only() {
        let s = MaskedSample::autoregressive(&sample());
        assert_eq!(s.tokens.len(), 8);
        assert_eq!(s.supervised_count(), 6);
        assert!(!s.loss_mask[0]);
        assert!(!s.loss_mask[7]);
        assert_eq!(s.targets[1], 11);
        assert_eq!(s.targets[6], 16);
    }

    #[test]
    fn p_ar_one_never_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = apply_sar_masking(&sample(), 2, 1.0, M, &mut rng);
            assert!(s.masked_at.is_none());
            assert!(!s.tokens.contains(&M));
        }
    }

    #[test]
    fn p_ar_zero_always_masks_and_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| apply_sar_masking(&sample(), 2, 0.0, M, &mut rng).masked_at.unwrap())
                .collect::<Vec<_>>()
        };
        let a = draw(7);
        assert_eq!(a, draw(7));
        assert!(a.iter().all(|&m| (1..=4).contains(&m)));
        for m in 1..=4 {
            assert!(a.contains(&m), "m={m} never drawn");
        }
    }

    #[test]
    fn short_answers_fall_back() {
        let short = TrainingSample {
            prompt: vec![5],
            answer: vec![6, 7],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(apply_sar_masking(&short, 2, 0.0, M, &mut rng).masked_at.is_none());
    }
}
