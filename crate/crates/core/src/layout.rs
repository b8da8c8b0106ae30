//! Extended decoding input: the output so far, followed by `k + 1` groups of
//! `k` mask tokens with the `k` pending candidates interleaved between them.
//!
//! ```text
//! x_1 .. x_l | M×k | c_1 | M×k | c_2 | ... | c_k | M×k
//! ```
//!
//! Non-mask slots attend causally to non-mask slots only, so the row of `c_i`
//! is exactly the autoregressive distribution after `x, c_1..c_i`. Mask slots
//! attend to every earlier non-mask slot plus the earlier masks of their own
//! group. Group `g` (0-based) therefore drafts the continuation that follows
//! `c_1..c_g`.
//!
//! All indices here are 0-based.

use crate::error::{Result, SpaceError};
use crate::math::BoolMatrix;
use crate::TokenId;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeLayout {
    pub tokens: Vec<TokenId>,
    pub attn_mask: BoolMatrix,
    pub positions: Vec<usize>,
    pub prompt_len: usize,
    pub k: usize,
    /// Slot of each candidate `c_1..c_k`.
    pub candidate_positions: Vec<usize>,
    /// First slot of each of the `k + 1` mask groups.
    pub group_starts: Vec<usize>,
    /// Group of every slot, `None` for non-mask slots.
    pub group_of: Vec<Option<usize>>,
}

impl DecodeLayout {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Row whose distribution verifies candidate `c_{accepted+1}` (or samples the
    /// extra token once `accepted` candidates were taken): the last prompt slot for
    /// `accepted = 0`, otherwise the slot of `c_accepted`.
    pub fn verify_row(&self, accepted: usize) -> usize {
        if accepted == 0 {
            self.prompt_len - 1
        } else {
            self.candidate_positions[accepted - 1]
        }
    }

    /// Slots of mask group `g` (0-based).
    pub fn group_slots(&self, g: usize) -> std::ops::Range<usize> {
        self.group_starts[g]..self.group_starts[g] + self.k
    }
}

/// Extended length `l + k(k + 2)`.
pub fn extended_len(prompt_len: usize, k: usize) -> usize {
    prompt_len + k * (k + 2)
}

pub fn build_layout(
    prompt: &[TokenId],
    candidates: &[TokenId],
    k: usize,
    mask_token_id: TokenId,
) -> Result<DecodeLayout> {
    if k == 0 {
        return Err(SpaceError::Layout("k must be at least 1".into()));
    }
    if candidates.len() != k {
        return Err(SpaceError::Layout(format!(
            "expected {k} candidates, got {}",
            candidates.len()
        )));
    }
    if prompt.is_empty() {
        return Err(SpaceError::Layout("prompt is empty".into()));
    }
    if let Some(i) = prompt.iter().position(|&t| t == mask_token_id) {
        return Err(SpaceError::Layout(format!("mask token at prompt index {i}")));
    }
    if candidates.contains(&mask_token_id) {
        return Err(SpaceError::Layout("mask token among candidates".into()));
    }

    let l = prompt.len();
    let total = extended_len(l, k);
    let mut tokens = Vec::with_capacity(total);
    let mut group_of = Vec::with_capacity(total);
    let mut candidate_positions = Vec::with_capacity(k);
    let mut group_starts = Vec::with_capacity(k + 1);

    tokens.extend_from_slice(prompt);
    group_of.resize(l, None);
    for g in 0..=k {
        group_starts.push(tokens.len());
        tokens.extend(std::iter::repeat_n(mask_token_id, k));
        group_of.extend(std::iter::repeat_n(Some(g), k));
        if g < k {
            candidate_positions.push(tokens.len());
            tokens.push(candidates[g]);
            group_of.push(None);
        }
    }
    debug_assert_eq!(tokens.len(), total);

    let attn_mask = attention_mask_for(&group_of);
    let positions = build_position_indices(&attn_mask);
    Ok(DecodeLayout {
        tokens,
        attn_mask,
        positions,
        prompt_len: l,
        k,
        candidate_positions,
        group_starts,
        group_of,
    })
}

/// Group-aware mask from per-slot group membership (`None` = non-mask slot).
///
/// `A[i][j] = 1` iff `i ≥ j` and either `j` is non-mask, or both are masks of
/// the same group.
pub fn attention_mask_for(group_of: &[Option<usize>]) -> BoolMatrix {
    let n = group_of.len();
    BoolMatrix::from_fn(n, n, |i, j| {
        i >= j
            && match (group_of[i], group_of[j]) {
                (_, None) => true,
                (Some(gi), Some(gj)) => gi == gj,
                (None, Some(_)) => false,
            }
    })
}

pub fn build_attention_mask(layout: &DecodeLayout) -> BoolMatrix {
    attention_mask_for(&layout.group_of)
}

/// `P̄_i = Σ_j A[i][j] − 1`.
pub fn build_position_indices(attn_mask: &BoolMatrix) -> Vec<usize> {
    (0..attn_mask.rows())
        .map(|r| attn_mask.row_sum(r).saturating_sub(1))
        .collect()
}

/// The mask obtained by reading the mask-to-mask clause as a pure distance
/// test (`i − j < k`) with no notion of groups.
pub fn literal_attention_mask(tokens: &[TokenId], k: usize, mask_token_id: TokenId) -> BoolMatrix {
    let n = tokens.len();
    BoolMatrix::from_fn(n, n, |i, j| {
        i >= j
            && (tokens[j] != mask_token_id
                || (tokens[i] == mask_token_id && tokens[j] == mask_token_id && i - j < k))
    })
}

/// Entries `(row, col)` where the distance-based reading disagrees with group semantics.
pub fn literal_mask_differences(layout: &DecodeLayout, mask_token_id: TokenId) -> Vec<(usize, usize)> {
    let literal = literal_attention_mask(&layout.tokens, layout.k, mask_token_id);
    let mut diffs = Vec::new();
    for i in 0..layout.len() {
        for j in 0..layout.len() {
            if literal.get(i, j) != layout.attn_mask.get(i, j) {
                diffs.push((i, j));
            }
        }
    }
    diffs
}

/// Text rendering of a layout: one header line of slot labels, then the mask grid
/// (rows attend, columns are attended; `#` allowed).
pub fn render_layout(layout: &DecodeLayout) -> String {
    let labels: Vec<String> = (0..layout.len())
        .map(|i| match layout.group_of[i] {
            Some(g) => format!("M{}", g + 1),
            None if i < layout.prompt_len => format!("x{}", i + 1),
            None => {
                let c = layout.candidate_positions.iter().position(|&p| p == i).unwrap_or(0);
                format!("c{}", c + 1)
            }
        })
        .collect();
    let width = labels.iter().map(String::len).max().unwrap_or(2);
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&format!("{label:>width$} p={:<3} ", layout.positions[i]));
        for j in 0..layout.len() {
            out.push(if layout.attn_mask.get(i, j) { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}
