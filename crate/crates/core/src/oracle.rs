//! Brute-force checks that auto-correct decoding samples from the same
//! sequence distribution as plain autoregressive decoding.
//!
//! The exact AR distribution over all continuations up to a horizon is
//! enumerated depth-first; SPACE and a sampled-AR control are estimated
//! empirically, and both are compared to it in total variation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{
    ar_generate_with_rng, space_generate_with_rng, DecodeConfig, Sampling, Verification,
};
use crate::error::{Result, SpaceError};
use crate::math::BoolMatrix;
use crate::model::{KvCache, ModelParams};
use crate::TokenId;

/// Largest `vocab^horizon` that exact enumeration accepts.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Probability of each continuation. Sequences exclude EOS: one shorter than
/// the horizon ended with EOS.
pub type SequenceDistribution = BTreeMap<Vec<TokenId>, f64>;

/// `vocab^horizon`, the enumeration size estimate checked against the guard.
pub fn enumeration_size(vocab_size: usize, horizon: usize) -> f64 {
    (vocab_size as f64).powi(horizon as i32)
}

/// Exact distribution of AR continuations of `prompt` with temperature 1 and
/// no truncation.
pub fn exact_ar_distribution(
    params: &ModelParams,
    prompt: &[TokenId],
    horizon: usize,
) -> Result<SequenceDistribution> {
    let c = &params.config;
    let estimate = enumeration_size(c.vocab_size, horizon);
    if estimate > ENUMERATION_LIMIT {
        return Err(SpaceError::Guard {
            estimate,
            limit: ENUMERATION_LIMIT,
        });
    }
    if prompt.is_empty() || prompt.contains(&c.mask_token_id) {
        return Err(SpaceError::Layout("prompt must be non-empty and mask-free".into()));
    }
    let mut dist = SequenceDistribution::new();
    if horizon == 0 {
        dist.insert(Vec::new(), 1.0);
        return Ok(dist);
    }
    let mut cache = KvCache::new(c.n_layers, c.d_model);
    let positions: Vec<usize> = (0..prompt.len()).collect();
    let probs = params.forward(prompt, &BoolMatrix::causal(prompt.len()), &positions, Some(&mut cache))?;
    let last = probs.row(probs.rows() - 1).to_vec();
    let mut path = Vec::with_capacity(horizon);
    enumerate(params, &cache, &last, 1.0, horizon, &mut path, &mut dist)?;
    Ok(dist)
}

fn enumerate(
    params: &ModelParams,
    cache: &KvCache,
    dist_row: &[f64],
    mass: f64,
    horizon: usize,
    path: &mut Vec<TokenId>,
    out: &mut SequenceDistribution,
) -> Result<()> {
    let c = &params.config;
    for (t, &p) in dist_row.iter().enumerate() {
        let t = t as TokenId;
        let q = mass * p;
        if q == 0.0 {
            continue;
        }
        if t == c.eos_token_id {
            *out.entry(path.clone()).or_insert(0.0) += q;
            continue;
        }
        path.push(t);
        if path.len() == horizon {
            *out.entry(path.clone()).or_insert(0.0) += q;
        } else {
            let mut branch = cache.clone();
            let slot = branch.len();
            let mask = BoolMatrix::from_fn(1, slot + 1, |_, _| true);
            let next = params.forward(&[t], &mask, &[slot], Some(&mut branch))?;
            enumerate(params, &branch, next.row(0), q, horizon, path, out)?;
        }
        path.pop();
    }
    Ok(())
}

/// Sampler whose output distribution is estimated.
#[derive(Clone, Debug)]
pub enum Generator {
    Ar(Sampling),
    Space(DecodeConfig),
}

impl Generator {
    fn run(
        &self,
        params: &ModelParams,
        prompt: &[TokenId],
        horizon: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<TokenId>> {
        match self {
            Generator::Ar(s) => Ok(ar_generate_with_rng(params, prompt, s, horizon, rng)?.0),
            Generator::Space(cfg) => {
                let cfg = DecodeConfig {
                    max_new_tokens: horizon,
                    ..cfg.clone()
                };
                Ok(space_generate_with_rng(params, prompt, &cfg, rng)?.0)
            }
        }
    }
}

/// RNG for run `index`: stream `index` of the seeded generator.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Frequencies over `n_samples` independent runs capped at `horizon` tokens.
/// Run `i` uses stream `i`, so the result does not depend on thread count.
pub fn empirical_distribution(
    generator: &Generator,
    params: &ModelParams,
    prompt: &[TokenId],
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SequenceDistribution> {
    if n_samples == 0 {
        return Ok(SequenceDistribution::new());
    }
    const CHUNK: usize = 1024;
    let n_chunks = n_samples.div_ceil(CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| -> Result<HashMap<Vec<TokenId>, usize>> {
            let mut local = HashMap::new();
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(n_samples) {
                let mut rng = stream_rng(seed, i as u64);
                let seq = generator.run(params, prompt, horizon, &mut rng)?;
                *local.entry(seq).or_insert(0) += 1;
            }
            Ok(local)
        })
        .try_reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            Ok(a)
        })?;
    let n = n_samples as f64;
    Ok(counts.into_iter().map(|(s, c)| (s, c as f64 / n)).collect())
}

/// `½ Σ |a(s) − b(s)|` over the union of supports.
pub fn tv_distance(a: &SequenceDistribution, b: &SequenceDistribution) -> f64 {
    let mut sum = 0.0;
    for (s, &pa) in a {
        sum += (pa - b.get(s).copied().unwrap_or(0.0)).abs();
    }
    for (s, &pb) in b {
        if !a.contains_key(s) {
            sum += pb;
        }
    }
    0.5 * sum
}

/// Slack allowed above the sampled-AR control.
pub const CONTROL_SLACK: f64 = 0.01;
/// Absolute bound on both empirical TV values.
pub const TV_BOUND: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub prompt: Vec<TokenId>,
    pub horizon: usize,
    pub k: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub exact_support: usize,
    pub space_support: usize,
    pub control_support: usize,
    pub exact_mass: f64,
    pub tv_space: f64,
    pub tv_control: f64,
    /// Diagnostic only: rejection resamples from the verify row itself.
    pub tv_paper_literal: Option<f64>,
    pub pass: bool,
}

impl EquivalenceReport {
    pub fn passes(tv_space: f64, tv_control: f64) -> bool {
        tv_space <= tv_control + CONTROL_SLACK && tv_space < TV_BOUND && tv_control < TV_BOUND
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceOptions {
    pub horizon: usize,
    pub k: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub include_paper_literal: bool,
}

/// Distributions behind an [`EquivalenceReport`], for per-sequence output.
#[derive(Clone, Debug)]
pub struct EquivalenceData {
    pub exact: SequenceDistribution,
    pub space: SequenceDistribution,
    pub control: SequenceDistribution,
    pub paper_literal: Option<SequenceDistribution>,
}

fn space_config(k: usize, verification: Verification) -> DecodeConfig {
    DecodeConfig {
        k,
        sampling: Sampling::untruncated(),
        verification,
        max_new_tokens: 0,
        seed: 0,
    }
}

// Each estimate uses its own seed family.
const CONTROL_SEED_OFFSET: u64 = 0x0A11_0000;
const LITERAL_SEED_OFFSET: u64 = 0x11E7_0000;

pub fn equivalence_report(
    params: &ModelParams,
    prompt: &[TokenId],
    opts: &EquivalenceOptions,
) -> Result<(EquivalenceReport, EquivalenceData)> {
    let exact = exact_ar_distribution(params, prompt, opts.horizon)?;
    let space = empirical_distribution(
        &Generator::Space(space_config(opts.k, Verification::LosslessResidual)),
        params,
        prompt,
        opts.horizon,
        opts.n_samples,
        opts.seed,
    )?;
    let control = empirical_distribution(
        &Generator::Ar(Sampling::untruncated()),
        params,
        prompt,
        opts.horizon,
        opts.n_samples,
        opts.seed.wrapping_add(CONTROL_SEED_OFFSET),
    )?;
    let paper_literal = if opts.include_paper_literal {
        Some(empirical_distribution(
            &Generator::Space(space_config(opts.k, Verification::PaperLiteral)),
            params,
            prompt,
            opts.horizon,
            opts.n_samples,
            opts.seed.wrapping_add(LITERAL_SEED_OFFSET),
        )?)
    } else {
        None
    };
    let tv_space = tv_distance(&exact, &space);
    let tv_control = tv_distance(&exact, &control);
    let report = EquivalenceReport {
        prompt: prompt.to_vec(),
        horizon: opts.horizon,
        k: opts.k,
        n_samples: opts.n_samples,
        seed: opts.seed,
        exact_support: exact.len(),
        space_support: space.len(),
        control_support: control.len(),
        exact_mass: exact.values().sum(),
        tv_space,
        tv_control,
        tv_paper_literal: paper_literal.as_ref().map(|d| tv_distance(&exact, d)),
        pass: EquivalenceReport::passes(tv_space, tv_control),
    };
    Ok((
        report,
        EquivalenceData {
            exact,
            space,
            control,
            paper_literal,
        },
    ))
}

impl EquivalenceData {
    /// CSV with one row per sequence in the union of supports.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut keys: Vec<&Vec<TokenId>> = self
            .exact
            .keys()
            .chain(self.space.keys())
            .chain(self.control.keys())
            .chain(self.paper_literal.iter().flat_map(|d| d.keys()))
            .collect();
        keys.sort();
        keys.dedup();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["sequence", "exact", "space", "control", "paper_literal"])?;
        let get = |d: &SequenceDistribution, k: &Vec<TokenId>| d.get(k).copied().unwrap_or(0.0);
        for k in keys {
            let seq = k.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ");
            let lit = self
                .paper_literal
                .as_ref()
                .map(|d| format!("{:.9}", get(d, k)))
                .unwrap_or_default();
            out.write_record([
                seq,
                format!("{:.9}", get(&self.exact, k)),
                format!("{:.9}", get(&self.space, k)),
                format!("{:.9}", get(&self.control, k)),
                lit,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};

    fn random_model(seed: u64) -> ModelParams {
        init_model(&ModelConfig {
            vocab_size: 6,
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            d_ff: 64,
            init_std: 0.5,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn dist(items: &[(&[TokenId], f64)]) -> SequenceDistribution {
        items.iter().map(|(s, p)| (s.to_vec(), *p)).collect()
    }

    #[test]
    fn tv_examples() {
        let a = dist(&[(&[2], 0.6), (&[3], 0.4)]);
        let b = dist(&[(&[2], 0.5), (&[3], 0.5)]);
        assert!((tv_distance(&a, &b) - 0.1).abs() < 1e-12);
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert_eq!(tv_distance(&dist(&[(&[2], 1.0)]), &dist(&[(&[3], 1.0)])), 1.0);
    }

    #[test]
    fn horizon_one_is_the_forward_row() {
        let m = random_model(1);
        let d = exact_ar_distribution(&m, &[2, 3, 4], 1).unwrap();
        let row = m.forward_causal(&[2, 3, 4]).unwrap();
        for t in 0..6u32 {
            let key = if t == 0 { vec![] } else { vec![t] };
            let want = row.get(2, t as usize);
            assert!((d.get(&key).copied().unwrap_or(0.0) - want).abs() < 1e-15, "token {t}");
        }
    }

    #[test]
    fn horizon_two_entries_are_path_products() {
        let m = random_model(2);
        let prompt = [2, 3, 4];
        let d = exact_ar_distribution(&m, &prompt, 2).unwrap();
        assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-9);
        // EOS-first, 4 first tokens × (EOS or 4 second tokens); mask has 0 mass
        assert_eq!(d.len(), 1 + 4 * 5);
        let p1 = m.forward_causal(&prompt).unwrap();
        for (a, b) in [(2u32, 5u32), (5, 3), (4, 0)] {
            let mut seq = prompt.to_vec();
            seq.push(a);
            let p2 = m.forward_causal(&seq).unwrap();
            let want = p1.get(2, a as usize) * p2.get(3, b as usize);
            let key = if b == 0 { vec![a] } else { vec![a, b] };
            let got = d[&key];
            assert!(((got - want) / want).abs() < 1e-12, "{a},{b}: {got} vs {want}");
        }
    }

    #[test]
    fn deterministic_model_is_a_point_mass() {
        let c = ModelConfig {
            vocab_size: 6,
            d_model: 16,
            ..Default::default()
        };
        let m = ModelParams::successor_table(&c, &[2, 3, 4, 5, 2, 3], 200.0).unwrap();
        let d = exact_ar_distribution(&m, &[2], 3).unwrap();
        // other paths survive only as subnormal residue
        let main = d[&vec![4, 2, 4]];
        assert!((main - 1.0).abs() < 1e-12);
        assert!(d.values().sum::<f64>() - main < 1e-300, "{d:?}");
        let e = empirical_distribution(&Generator::Ar(Sampling::untruncated()), &m, &[2], 3, 50, 0).unwrap();
        assert_eq!(e, dist(&[(&[4, 2, 4], 1.0)]));
        let (report, _) = equivalence_report(
            &m,
            &[2],
            &EquivalenceOptions {
                horizon: 3,
                k: 1,
                n_samples: 200,
                seed: 0,
                include_paper_literal: false,
            },
        )
        .unwrap();
        assert!(report.tv_space < 1e-9 && report.tv_control < 1e-9 && report.pass);
    }

    #[test]
    fn one_sample_is_a_point_mass() {
        let m = random_model(3);
        let e = empirical_distribution(&Generator::Ar(Sampling::untruncated()), &m, &[2, 3], 2, 1, 9).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.values().copied().next(), Some(1.0));
    }

    #[test]
    fn guard_reports_estimate() {
        let m = random_model(0);
        match exact_ar_distribution(&m, &[2], 8) {
            Err(SpaceError::Guard { estimate, .. }) => assert_eq!(estimate, 6f64.powi(8)),
            other => panic!("expected guard, got {other:?}"),
        }
    }

    #[test]
    fn empirical_is_independent_of_thread_count() {
        let m = random_model(4);
        let g = Generator::Space(space_config(2, Verification::LosslessResidual));
        let a = empirical_distribution(&g, &m, &[2, 3], 2, 3000, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| empirical_distribution(&g, &m, &[2, 3], 2, 3000, 5).unwrap());
        assert_eq!(a, b);
    }
}
