use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaceError};
use crate::sarsft::TrainingSample;
use crate::TokenId;

/// Reserved ids of a vocabulary; every other id is an ordinary token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpace {
    pub vocab_size: usize,
    pub eos: TokenId,
    pub mask: TokenId,
}

impl TokenSpace {
    pub fn ordinary(&self) -> Vec<TokenId> {
        (0..self.vocab_size as TokenId)
            .filter(|&t| t != self.eos && t != self.mask)
            .collect()
    }
}

/// Synthetic corpus families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorpusKind {
    /// Periodic strings from a fixed bank of patterns. No two rotations of any
    /// patterns coincide, so one period of context fixes the continuation.
    RepeatPattern {
        period: usize,
        patterns: usize,
        answer_len: usize,
    },
    /// Runs of consecutive ordinary tokens, wrapping at the end of the range.
    Counting { prompt_len: usize, answer_len: usize },
    /// A few fixed sentences with one free slot, terminated by EOS.
    TemplatedPhrases { templates: usize },
}

impl Default for CorpusKind {
    fn default() -> Self {
        CorpusKind::RepeatPattern {
            period: 4,
            patterns: 8,
            answer_len: 16,
        }
    }
}

// Banks are drawn from a constant seed so corpora built with different seeds
// share the same underlying patterns.
const BANK_SEED: u64 = 0x5041_5454;

fn pattern_bank(period: usize, count: usize, ordinary: &[TokenId]) -> Result<Vec<Vec<TokenId>>> {
    if period == 0 || count == 0 {
        return Err(SpaceError::Config("period and patterns must be positive".into()));
    }
    if (ordinary.len() as f64).powi(period as i32) < (4 * count * period) as f64 {
        return Err(SpaceError::Config(format!(
            "{} ordinary tokens cannot hold {count} distinct patterns of period {period}",
            ordinary.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BANK_SEED);
    let mut seen: HashSet<Vec<TokenId>> = HashSet::new();
    let mut bank = Vec::with_capacity(count);
    let mut attempts = 0;
    while bank.len() < count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(SpaceError::Config("could not build a distinct pattern bank".into()));
        }
        let p: Vec<TokenId> = (0..period).map(|_| *ordinary.choose(&mut rng).unwrap()).collect();
        let rotations: Vec<Vec<TokenId>> = (0..period)
            .map(|r| p[r..].iter().chain(&p[..r]).copied().collect())
            .collect();
        let distinct: HashSet<&Vec<TokenId>> = rotations.iter().collect();
        if distinct.len() < period || rotations.iter().any(|r| seen.contains(r)) {
            continue;
        }
        seen.extend(rotations);
        bank.push(p);
    }
    Ok(bank)
}

fn template_bank(count: usize, ordinary: &[TokenId]) -> Result<Vec<(Vec<TokenId>, usize)>> {
    if count == 0 || ordinary.len() < 4 {
        return Err(SpaceError::Config("templated phrases need templates and ≥4 ordinary tokens".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BANK_SEED + 1);
    let mut heads = HashSet::new();
    let mut bank = Vec::with_capacity(count);
    while bank.len() < count {
        let len = rng.gen_range(6..=10);
        let words: Vec<TokenId> = (0..len).map(|_| *ordinary.choose(&mut rng).unwrap()).collect();
        if !heads.insert(words[..2].to_vec()) {
            continue;
        }
        let slot = rng.gen_range(3..len);
        bank.push((words, slot));
    }
    Ok(bank)
}

/// Deterministic corpus of `size` samples.
pub fn synth_corpus(
    kind: &CorpusKind,
    size: usize,
    seed: u64,
    space: TokenSpace,
) -> Result<Vec<TrainingSample>> {
    let ordinary = space.ordinary();
    if ordinary.len() < 2 {
        return Err(SpaceError::Config("vocabulary has fewer than 2 ordinary tokens".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(size);
    match *kind {
        CorpusKind::RepeatPattern {
            period,
            patterns,
            answer_len,
        } => {
            if answer_len == 0 {
                return Err(SpaceError::Config("answer_len must be positive".into()));
            }
            let bank = pattern_bank(period, patterns, &ordinary)?;
            for _ in 0..size {
                let p = &bank[rng.gen_range(0..bank.len())];
                let phase = rng.gen_range(0..period);
                let prompt_len = rng.gen_range(period..=2 * period);
                let seq: Vec<TokenId> = (0..prompt_len + answer_len)
                    .map(|i| p[(phase + i) % period])
                    .collect();
                out.push(TrainingSample {
                    prompt: seq[..prompt_len].to_vec(),
                    answer: seq[prompt_len..].to_vec(),
                });
            }
        }
        CorpusKind::Counting {
            prompt_len,
            answer_len,
        } => {
            if prompt_len == 0 || answer_len == 0 {
                return Err(SpaceError::Config("prompt_len and answer_len must be positive".into()));
            }
            let n = ordinary.len();
            for _ in 0..size {
                let start = rng.gen_range(0..n);
                let seq: Vec<TokenId> = (0..prompt_len + answer_len)
                    .map(|i| ordinary[(start + i) % n])
                    .collect();
                out.push(TrainingSample {
                    prompt: seq[..prompt_len].to_vec(),
                    answer: seq[prompt_len..].to_vec(),
                });
            }
        }
        CorpusKind::TemplatedPhrases { templates } => {
            let bank = template_bank(templates, &ordinary)?;
            for _ in 0..size {
                let (words, slot) = &bank[rng.gen_range(0..bank.len())];
                let mut seq = words.clone();
                seq[*slot] = *ordinary.choose(&mut rng).unwrap();
                let mut answer = seq[2..].to_vec();
                answer.push(space.eos);
                out.push(TrainingSample {
                    prompt: seq[..2].to_vec(),
                    answer,
                });
            }
        }
    }
    Ok(out)
}

/// Writes one `{"prompt": [...], "answer": [...]}` object per line.
pub fn write_corpus<W: Write>(samples: &[TrainingSample], mut w: W) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TrainingSample = serde_json::from_str(&line)
            .map_err(|e| SpaceError::Format(format!("corpus line {}: {e}", i + 1)))?;
        if s.answer.is_empty() {
            return Err(SpaceError::Format(format!("corpus line {}: empty answer", i + 1)));
        }
        out.push(s);
    }
    Ok(out)
}
