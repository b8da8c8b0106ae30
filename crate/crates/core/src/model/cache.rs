use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaceError};
use crate::math::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotKind {
    Prompt,
    Accepted,
    Candidate,
    Mask,
}

/// Per-layer keys and values for every slot already processed.
///
/// Slots are addressed by their index in processing order. Compaction keeps a
/// subset of slots and renumbers them densely; each kept slot retains the
/// position index it was computed with.
#[derive(Clone, Debug, PartialEq)]
pub struct KvCache {
    pub(crate) keys: Vec<Matrix>,
    pub(crate) values: Vec<Matrix>,
    positions: Vec<usize>,
    kinds: Vec<SlotKind>,
}

impl KvCache {
    pub fn new(n_layers: usize, d_model: usize) -> Self {
        KvCache {
            keys: vec![Matrix::zeros(0, d_model); n_layers],
            values: vec![Matrix::zeros(0, d_model); n_layers],
            positions: Vec::new(),
            kinds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_layers(&self) -> usize {
        self.keys.len()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn kinds(&self) -> &[SlotKind] {
        &self.kinds
    }

    pub fn set_kind(&mut self, slot: usize, kind: SlotKind) -> Result<()> {
        let len = self.kinds.len();
        let k = self
            .kinds
            .get_mut(slot)
            .ok_or(SpaceError::Index { index: slot, len })?;
        *k = kind;
        Ok(())
    }

    pub(crate) fn push_slots(&mut self, positions: &[usize], kinds: &[SlotKind]) {
        self.positions.extend_from_slice(positions);
        self.kinds.extend_from_slice(kinds);
    }

    /// Retains `keep` (deduplicated, in ascending order) and drops everything else.
    pub fn compact(&self, keep: &[usize]) -> Result<KvCache> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&bad) = keep.iter().find(|&&s| s >= self.len()) {
            return Err(SpaceError::Index {
                index: bad,
                len: self.len(),
            });
        }
        Ok(KvCache {
            keys: self
                .keys
                .iter()
                .map(|m| m.gather_rows(&keep))
                .collect::<Result<_>>()?,
            values: self
                .values
                .iter()
                .map(|m| m.gather_rows(&keep))
                .collect::<Result<_>>()?,
            positions: keep.iter().map(|&s| self.positions[s]).collect(),
            kinds: keep.iter().map(|&s| self.kinds[s]).collect(),
        })
    }

    /// Drops every slot at index `len` and beyond.
    pub fn truncate(&mut self, len: usize) -> Result<()> {
        if len < self.len() {
            let keep: Vec<usize> = (0..len).collect();
            *self = self.compact(&keep)?;
        }
        Ok(())
    }
}

pub fn compact_cache(cache: &KvCache, keep_slots: &[usize]) -> Result<KvCache> {
    cache.compact(keep_slots)
}
