//! Central-difference gradient checking.

use rand::Rng;

use crate::error::Result;
use crate::math::matrix::Matrix;

/// A single parameter coordinate: tensor index and flat offset within it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coord {
    pub tensor: usize,
    pub offset: usize,
}

#[derive(Clone, Debug)]
pub struct CoordCheck {
    pub coord: Coord,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic − numeric| / max(1, |analytic|)`
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tolerance: f64,
    pub max_error: f64,
    /// Worst coordinates first (at most five).
    pub worst: Vec<CoordCheck>,
    pub passed: bool,
}

/// Samples `n` coordinates uniformly over all tensor entries (with replacement).
pub fn sample_coords<R: Rng>(shapes: &[(usize, usize)], n: usize, rng: &mut R) -> Vec<Coord> {
    let sizes: Vec<usize> = shapes.iter().map(|(r, c)| r * c).collect();
    let total: usize = sizes.iter().sum();
    (0..n)
        .map(|_| {
            let mut flat = rng.gen_range(0..total);
            let mut tensor = 0;
            while flat >= sizes[tensor] {
                flat -= sizes[tensor];
                tensor += 1;
            }
            Coord {
                tensor,
                offset: flat,
            }
        })
        .collect()
}

/// Compares analytic gradients against central differences of `loss`.
///
/// `loss` is re-evaluated on perturbed copies of `params`; it must be
/// deterministic. Failures are reported, never raised.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[Matrix],
    analytic: &[Matrix],
    coords: &[Coord],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    let mut work = params.to_vec();
    let mut checks = Vec::with_capacity(coords.len());
    for &coord in coords {
        let orig = work[coord.tensor].data()[coord.offset];
        work[coord.tensor].data_mut()[coord.offset] = orig + epsilon;
        let plus = loss(&work)?;
        work[coord.tensor].data_mut()[coord.offset] = orig - epsilon;
        let minus = loss(&work)?;
        work[coord.tensor].data_mut()[coord.offset] = orig;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[coord.tensor].data()[coord.offset];
        let error = (a - numeric).abs() / a.abs().max(1.0);
        checks.push(CoordCheck {
            coord,
            analytic: a,
            numeric,
            error,
        });
    }
    checks.sort_by(|x, y| y.error.total_cmp(&x.error));
    let max_error = checks.first().map_or(0.0, |c| c.error);
    let passed = checks.iter().all(|c| c.error <= tolerance);
    let checked = checks.len();
    checks.truncate(5);
    Ok(GradCheckReport {
        checked,
        tolerance,
        max_error,
        worst: checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::tape::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic() {
        let w = vec![Matrix::filled(1, 1, 3.0)];
        let analytic = vec![Matrix::filled(1, 1, 6.0)];
        let report = finite_diff_check(
            |p| Ok(p[0].get(0, 0).powi(2)),
            &w,
            &analytic,
            &[Coord { tensor: 0, offset: 0 }],
            1e-4,
            1e-8,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!((report.worst[0].numeric - 6.0).abs() < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_reported_not_raised() {
        let w = vec![Matrix::filled(1, 1, 3.0)];
        let analytic = vec![Matrix::filled(1, 1, 5.0)];
        let report = finite_diff_check(
            |p| Ok(p[0].get(0, 0).powi(2)),
            &w,
            &analytic,
            &[Coord { tensor: 0, offset: 0 }],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(!report.passed);
        assert!(report.max_error > 0.1);
    }

    fn softmax_classifier_loss(
        tape: &mut Tape,
        params: &[Matrix],
        x: &Matrix,
        targets: &[Option<usize>],
    ) -> Result<(f64, Vec<crate::math::tape::Var>)> {
        let w = tape.leaf(params[0].clone());
        let b = tape.leaf(params[1].clone());
        let xv = tape.leaf(x.clone());
        let h = tape.matmul(xv, w)?;
        let logits = tape.add_row(h, b)?;
        let loss = tape.softmax_cross_entropy(logits, targets, 1.0 / 3.0)?;
        Ok((tape.value(loss).get(0, 0), vec![w, b, loss]))
    }

    #[test]
    fn softmax_classifier_three_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Matrix::from_vec(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let params = vec![
            Matrix::from_vec(4, 5, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            Matrix::from_vec(1, 5, (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        ];
        let targets = [Some(0), Some(3), Some(4)];

        let mut tape = Tape::new();
        let (_, vars) = softmax_classifier_loss(&mut tape, &params, &x, &targets).unwrap();
        let grads = tape.backward(vars[2]).unwrap();
        let analytic = vec![
            grads.get(vars[0]).unwrap().clone(),
            grads.get(vars[1]).unwrap().clone(),
        ];
        let coords: Vec<Coord> = (0..20)
            .map(|o| Coord { tensor: 0, offset: o })
            .chain((0..5).map(|o| Coord { tensor: 1, offset: o }))
            .collect();
        let report = finite_diff_check(
            |p| {
                let mut t = Tape::new();
                Ok(softmax_classifier_loss(&mut t, p, &x, &targets)?.0)
            },
            &params,
            &analytic,
            &coords,
            1e-4,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.checked, 25);
    }

    #[test]
    fn matmul_backward_identities() {
        // L = Σ G ⊙ (A·B) has dL/dA = G·Bᵀ and dL/dB = Aᵀ·G.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand_m = |r, c| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let a = rand_m(3, 4);
        let b = rand_m(4, 2);
        let g = rand_m(3, 2);
        let loss_of = |p: &[Matrix]| -> Result<f64> {
            let c = p[0].matmul(&p[1])?;
            Ok(c.data().iter().zip(g.data()).map(|(x, y)| x * y).sum())
        };
        let analytic = vec![g.matmul_bt(&b).unwrap(), a.matmul_at(&g).unwrap()];
        let coords: Vec<Coord> = (0..12)
            .map(|o| Coord { tensor: 0, offset: o })
            .chain((0..8).map(|o| Coord { tensor: 1, offset: o }))
            .collect();
        let report =
            finite_diff_check(loss_of, &[a, b], &analytic, &coords, 1e-5, 1e-8).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn tape_ops_gradcheck() {
        // Exercises layer norm, gelu, slicing, concat, masked softmax and gather.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rand_m = |r, c| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let params = vec![rand_m(5, 4), rand_m(1, 4), rand_m(1, 4), rand_m(4, 4)];
        let ids = [0usize, 3, 3, 1];
        let additive = crate::math::matrix::BoolMatrix::causal(4).to_additive();
        let targets = [Some(1), None, Some(2), Some(0)];
        let build = |t: &mut Tape, p: &[Matrix]| -> Result<(crate::math::tape::Var, Vec<crate::math::tape::Var>)> {
            let table = t.leaf(p[0].clone());
            let gamma = t.leaf(p[1].clone());
            let beta = t.leaf(p[2].clone());
            let w = t.leaf(p[3].clone());
            let x = t.gather_rows(table, &ids)?;
            let h = t.layer_norm(x, gamma, beta)?;
            let left = t.slice_cols(h, 0, 2)?;
            let right = t.slice_cols(h, 2, 2)?;
            let scores = t.matmul_bt(left, right)?;
            let scores = t.scale(scores, 0.7);
            let att = t.masked_softmax(scores, &additive)?;
            let mixed = t.matmul(att, right)?;
            let g = t.gelu(left);
            let cat = t.concat_cols(&[mixed, g])?;
            let out = t.matmul(cat, w)?;
            let out = t.add(out, h)?;
            let loss = t.softmax_cross_entropy(out, &targets, 1.0 / 3.0)?;
            Ok((loss, vec![table, gamma, beta, w]))
        };
        let mut tape = Tape::new();
        let (loss, vars) = build(&mut tape, &params).unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic: Vec<Matrix> = vars.iter().map(|&v| grads.get(v).unwrap().clone()).collect();
        let shapes: Vec<_> = params.iter().map(Matrix::shape).collect();
        let coords: Vec<Coord> = shapes
            .iter()
            .enumerate()
            .flat_map(|(t, (r, c))| (0..r * c).map(move |o| Coord { tensor: t, offset: o }))
            .collect();
        let report = finite_diff_check(
            |p| {
                let mut t = Tape::new();
                let (l, _) = build(&mut t, p)?;
                Ok(t.value(l).get(0, 0))
            },
            &params,
            &analytic,
            &coords,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
