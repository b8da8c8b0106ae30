use rand::Rng;

use crate::decoder::sampling::{argmax, warp};
use crate::decoder::{CandidateState, DecodeConfig, Verification};
use crate::error::{Result, SpaceError};

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    /// Number of leading candidates accepted, `0..=k`.
    pub accepted: usize,
    /// Distribution for the extra token that closes the step.
    pub next_dist: Vec<f64>,
}

/// Verifies candidates against `q_rows`, where `q_rows[i]` is the model's
/// distribution after the output and `c_1..c_i` (so `k + 1` rows).
///
/// In stochastic modes both the verify rows and the stored draft rows live in
/// the warped space; `q_rows` are warped here, draft rows were warped when drafted.
pub fn verify_candidates<R: Rng + ?Sized>(
    q_rows: &[&[f64]],
    state: &CandidateState,
    config: &DecodeConfig,
    rng: &mut R,
) -> Result<Verdict> {
    let k = state.k();
    if q_rows.len() != k + 1 {
        return Err(SpaceError::shape(
            "verify_candidates",
            format!("{} verify rows for k = {k}", q_rows.len()),
        ));
    }
    if !state.sentinel && state.dists.len() != k {
        return Err(SpaceError::shape(
            "verify_candidates",
            format!("{} draft rows for k = {k}", state.dists.len()),
        ));
    }

    if config.verification == Verification::GreedyMatch {
        let mut accepted = 0;
        if !state.sentinel {
            while accepted < k && state.tokens[accepted] == argmax(q_rows[accepted]) {
                accepted += 1;
            }
        }
        return Ok(Verdict {
            accepted,
            next_dist: q_rows[accepted].to_vec(),
        });
    }

    let mut accepted = 0;
    while accepted < k {
        if state.sentinel {
            break;
        }
        let q = warp(q_rows[accepted], &config.sampling);
        let token = state.tokens[accepted] as usize;
        let p = state.probs[accepted];
        let ratio = if p > 0.0 { q[token] / p } else { f64::INFINITY };
        let r: f64 = rng.gen();
        if r < ratio {
            accepted += 1;
            continue;
        }
        let next_dist = match config.verification {
            Verification::PaperLiteral => q,
            _ => residual(&q, &state.dists[accepted]).unwrap_or(q),
        };
        return Ok(Verdict {
            accepted,
            next_dist,
        });
    }
    Ok(Verdict {
        accepted,
        next_dist: warp(q_rows[accepted], &config.sampling),
    })
}

/// `normalize(max(0, q − d))`, or `None` when the residual has no mass.
pub(crate) fn residual(q: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let mut out: Vec<f64> = q.iter().zip(d).map(|(a, b)| (a - b).max(0.0)).collect();
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return None;
    }
    out.iter_mut().for_each(|v| *v /= total);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::Sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stochastic(k: usize) -> DecodeConfig {
        DecodeConfig {
            k,
            sampling: Sampling::untruncated(),
            ..Default::default()
        }
    }

    #[test]
    fn equal_probabilities_accept_everything() {
        let rows = [vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]];
        let state = CandidateState {
            tokens: vec![1, 0],
            probs: vec![0.5, 0.6],
            dists: vec![rows[0].clone(), rows[1].clone()],
            sentinel: false,
        };
        let q: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let v = verify_candidates(&q, &state, &stochastic(2), &mut rng).unwrap();
            assert_eq!(v.accepted, 2);
            assert_eq!(v.next_dist, rows[2]);
        }
    }

    #[test]
    fn sentinel_rejects_first() {
        let rows = [vec![0.0, 1.0], vec![0.0, 1.0]];
        let q: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let state = CandidateState::sentinel(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for cfg in [stochastic(1), DecodeConfig::greedy(1, 8)] {
            let v = verify_candidates(&q, &state, &cfg, &mut rng).unwrap();
            assert_eq!(v.accepted, 0);
            assert_eq!(v.next_dist, rows[0]);
        }
    }

    #[test]
    fn greedy_match_stops_at_first_mismatch() {
        let rows = [vec![0.1, 0.9, 0.0], vec![0.7, 0.2, 0.1], vec![0.2, 0.2, 0.6]];
        let q: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let state = CandidateState {
            tokens: vec![1, 2],
            probs: vec![1.0, 1.0],
            dists: vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            sentinel: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = verify_candidates(&q, &state, &DecodeConfig::greedy(2, 8), &mut rng).unwrap();
        assert_eq!(v.accepted, 1);
        assert_eq!(v.next_dist, rows[1]);
    }

    #[test]
    fn residual_and_literal_differ_on_rejection() {
        let q = vec![0.25, 0.5, 0.25];
        let d = vec![0.5, 0.5, 0.0];
        let rows = [q.clone(), q.clone()];
        let qr: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let state = CandidateState {
            tokens: vec![0],
            probs: vec![0.5],
            dists: vec![d],
            sentinel: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let literal = DecodeConfig {
            verification: Verification::PaperLiteral,
            ..stochastic(1)
        };
        loop {
            let v = verify_candidates(&qr, &state, &stochastic(1), &mut rng).unwrap();
            if v.accepted == 0 {
                assert_eq!(v.next_dist, vec![0.0, 0.0, 1.0]);
                break;
            }
        }
        loop {
            let v = verify_candidates(&qr, &state, &literal, &mut rng).unwrap();
            if v.accepted == 0 {
                assert_eq!(v.next_dist, q);
                break;
            }
        }
    }

    #[test]
    fn wrong_row_count() {
        let rows = [vec![1.0]];
        let q: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = CandidateState::sentinel(2, 0);
        assert!(verify_candidates(&q, &state, &stochastic(2), &mut rng).is_err());
    }
}
