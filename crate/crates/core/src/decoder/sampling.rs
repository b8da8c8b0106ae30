use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaceError};
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "SamplingRepr", into = "SamplingRepr")]
pub enum Sampling {
    Greedy,
    /// Temperature, then top-k (0 disables), then nucleus truncation.
    Stochastic {
        temperature: f64,
        top_p: f64,
        top_k: usize,
    },
}

// Serde ignores unknown keys on unit variants of tagged enums, so the wire
// form uses struct variants throughout.
#[derive(Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
enum SamplingRepr {
    Greedy {},
    Stochastic {
        temperature: f64,
        top_p: f64,
        top_k: usize,
    },
}

impl From<SamplingRepr> for Sampling {
    fn from(r: SamplingRepr) -> Self {
        match r {
            SamplingRepr::Greedy {} => Sampling::Greedy,
            SamplingRepr::Stochastic {
                temperature,
                top_p,
                top_k,
            } => Sampling::Stochastic {
                temperature,
                top_p,
                top_k,
            },
        }
    }
}

impl From<Sampling> for SamplingRepr {
    fn from(s: Sampling) -> Self {
        match s {
            Sampling::Greedy => SamplingRepr::Greedy {},
            Sampling::Stochastic {
                temperature,
                top_p,
                top_k,
            } => SamplingRepr::Stochastic {
                temperature,
                top_p,
                top_k,
            },
        }
    }
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Stochastic {
            temperature: 1.0,
            top_p: 0.95,
            top_k: 10,
        }
    }
}

impl Sampling {
    /// Temperature 1 with no truncation: samples from the model distribution as-is.
    pub fn untruncated() -> Self {
        Sampling::Stochastic {
            temperature: 1.0,
            top_p: 1.0,
            top_k: 0,
        }
    }

    pub fn is_greedy(&self) -> bool {
        matches!(self, Sampling::Greedy)
    }

    pub fn validate(&self) -> Result<()> {
        if let Sampling::Stochastic {
            temperature, top_p, ..
        } = *self
        {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(SpaceError::Config(format!("temperature {temperature} must be > 0")));
            }
            if !(top_p > 0.0 && top_p <= 1.0) {
                return Err(SpaceError::Config(format!("top_p {top_p} must be in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Index of the largest entry; the lowest id wins ties.
pub fn argmax(dist: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best as TokenId
}

fn normalize(dist: &mut [f64]) {
    let total: f64 = dist.iter().sum();
    if total > 0.0 {
        dist.iter_mut().for_each(|p| *p /= total);
    }
}

/// Ids sorted by descending probability, lower id first among equals.
fn ranked(dist: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx
}

/// Applies temperature, top-k and top-p to a probability row and renormalizes.
/// Greedy sampling leaves the row unchanged.
pub fn warp(dist: &[f64], sampling: &Sampling) -> Vec<f64> {
    let Sampling::Stochastic {
        temperature,
        top_p,
        top_k,
    } = *sampling
    else {
        return dist.to_vec();
    };
    let mut out = dist.to_vec();
    let mut touched = false;
    if temperature != 1.0 {
        let inv_t = 1.0 / temperature;
        // p^(1/T) == softmax(logits / T) up to normalization; work in log space.
        let max_log = out
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p.ln() * inv_t)
            .fold(f64::NEG_INFINITY, f64::max);
        for p in out.iter_mut() {
            *p = if *p > 0.0 { (p.ln() * inv_t - max_log).exp() } else { 0.0 };
        }
        normalize(&mut out);
        touched = true;
    }
    if top_k > 0 && top_k < out.len() {
        for &i in ranked(&out).iter().skip(top_k) {
            out[i] = 0.0;
        }
        normalize(&mut out);
        touched = true;
    }
    if top_p < 1.0 {
        let order = ranked(&out);
        let mut cum = 0.0;
        let mut cut = order.len();
        for (n, &i) in order.iter().enumerate() {
            cum += out[i];
            if cum >= top_p {
                cut = n + 1;
                break;
            }
        }
        for &i in &order[cut..] {
            out[i] = 0.0;
        }
        touched = true;
    }
    if touched {
        normalize(&mut out);
    }
    out
}

/// Draws an id from a (not necessarily normalized) non-negative row.
pub fn sample_from<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> TokenId {
    let total: f64 = dist.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last_nonzero = i;
        if u < cum {
            return i as TokenId;
        }
    }
    last_nonzero as TokenId
}

/// Greedy: argmax. Stochastic: warp, then sample.
pub fn sample_token<R: Rng + ?Sized>(dist: &[f64], sampling: &Sampling, rng: &mut R) -> TokenId {
    match sampling {
        Sampling::Greedy => argmax(dist),
        Sampling::Stochastic { .. } => sample_from(&warp(dist, sampling), rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wire_form() {
        assert_eq!(serde_json::to_string(&Sampling::Greedy).unwrap(), r#"{"mode":"greedy"}"#);
        let s: Sampling = serde_json::from_str(r#"{"mode":"stochastic","temperature":0.7,"top_p":0.9,"top_k":5}"#).unwrap();
        assert_eq!(serde_json::from_str::<Sampling>(&serde_json::to_string(&s).unwrap()).unwrap(), s);
        assert!(serde_json::from_str::<Sampling>(r#"{"mode":"greedy","top_k":5}"#).is_err());
        assert!(serde_json::from_str::<Sampling>(r#"{"mode":"stochastic","temperature":1.0}"#).is_err());
    }

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_token(&[0.1, 0.7, 0.2], &Sampling::Greedy, &mut rng), 1);
        assert_eq!(argmax(&[0.4, 0.1, 0.4]), 0);
    }

    #[test]
    fn top_k_one_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = [0.05, 0.3, 0.25, 0.4];
        for &temperature in &[0.3, 1.0, 5.0] {
            let s = Sampling::Stochastic {
                temperature,
                top_p: 1.0,
                top_k: 1,
            };
            for _ in 0..50 {
                assert_eq!(sample_token(&dist, &s, &mut rng), 3);
            }
        }
    }

    #[test]
    fn untruncated_is_identity() {
        let dist = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(warp(&dist, &Sampling::untruncated()), dist.to_vec());
    }

    /// Brute-force reference: enumerate subsets in rank order.
    fn reference_warp(dist: &[f64], top_p: f64, top_k: usize) -> Vec<f64> {
        let mut pairs: Vec<(usize, f64)> = dist.iter().copied().enumerate().collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let kept_k: Vec<(usize, f64)> = pairs.into_iter().take(top_k).collect();
        let z: f64 = kept_k.iter().map(|p| p.1).sum();
        let mut support = Vec::new();
        let mut cum = 0.0;
        for &(i, p) in &kept_k {
            support.push((i, p));
            cum += p / z;
            if cum >= top_p {
                break;
            }
        }
        let z2: f64 = support.iter().map(|p| p.1).sum();
        let mut out = vec![0.0; dist.len()];
        for (i, p) in support {
            out[i] = p / z2;
        }
        out
    }

    #[test]
    fn top_p_top_k_matches_enumeration() {
        let raw = [9.0, 1.0, 14.0, 3.0, 7.0, 0.5, 11.0, 2.0, 6.0, 4.0, 8.0, 0.25];
        let total: f64 = raw.iter().sum();
        let dist: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let s = Sampling::Stochastic {
            temperature: 1.0,
            top_p: 0.95,
            top_k: 10,
        };
        let got = warp(&dist, &s);
        let want = reference_warp(&dist, 0.95, 10);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
        // ids 5 and 11 fall outside top-10; ids 7 and 1 are cut by the nucleus
        assert_eq!(got[5], 0.0);
        assert_eq!(got[11], 0.0);
        assert_eq!(got[7], 0.0);
        assert_eq!(got[1], 0.0);
        assert!((got[3] - 3.0 / 62.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_matches_logit_scaling() {
        let logits = [0.5f64, -1.0, 2.0, 0.0];
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let dist: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
        let t = 0.7;
        let z2: f64 = logits.iter().map(|l| (l / t).exp()).sum();
        let s = Sampling::Stochastic {
            temperature: t,
            top_p: 1.0,
            top_k: 0,
        };
        for (g, l) in warp(&dist, &s).iter().zip(&logits) {
            assert!((g - (l / t).exp() / z2).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_from_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = [0.2, 0.0, 0.5, 0.3];
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_from(&dist, &mut rng) as usize] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, p) in counts.iter().zip(dist) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
    }
}
