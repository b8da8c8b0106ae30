use crate::error::{Result, SpaceError};
use crate::math::{cross_entropy, BoolMatrix, Matrix, Tape};
use crate::model::ModelParams;
use crate::sarsft::MaskedSample;

/// Sum of `−ln p(target)` over supervised positions.
pub fn sar_loss_sum(prob_rows: &Matrix, sample: &MaskedSample) -> Result<f64> {
    if prob_rows.rows() != sample.tokens.len() {
        return Err(SpaceError::shape(
            "sar_loss",
            format!("{} rows for {} tokens", prob_rows.rows(), sample.tokens.len()),
        ));
    }
    let mut total = 0.0;
    for (r, t) in sample.supervised().into_iter().enumerate() {
        if let Some(t) = t {
            total += cross_entropy(prob_rows.row(r), t)?;
        }
    }
    Ok(total)
}

/// Mean of `−ln p(target)` over supervised positions.
pub fn sar_loss(prob_rows: &Matrix, sample: &MaskedSample) -> Result<f64> {
    let n = sample.supervised_count();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sar_loss_sum(prob_rows, sample)? / n as f64)
}

/// Batch loss averaged over every supervised position in the batch, computed
/// with the plain (untaped) forward.
pub fn batch_loss(params: &ModelParams, batch: &[MaskedSample]) -> Result<f64> {
    let total: usize = batch.iter().map(MaskedSample::supervised_count).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for s in batch {
        let probs = params.forward_causal(&s.tokens)?;
        sum += sar_loss_sum(&probs, s)?;
    }
    Ok(sum / total as f64)
}

/// Batch loss and its gradient with respect to every parameter tensor, via the tape.
pub fn loss_and_grad(params: &ModelParams, batch: &[MaskedSample]) -> Result<(f64, Vec<Matrix>)> {
    let total: usize = batch.iter().map(MaskedSample::supervised_count).sum();
    let mut grads: Vec<Matrix> = params
        .tensors
        .iter()
        .map(|t| Matrix::zeros(t.value.rows(), t.value.cols()))
        .collect();
    if total == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / total as f64;
    let mut loss = 0.0;
    for s in batch {
        let n = s.tokens.len();
        let positions: Vec<usize> = (0..n).collect();
        let mut tape = Tape::new();
        let (logits, vars) =
            params.forward_tape(&mut tape, &s.tokens, &BoolMatrix::causal(n), &positions)?;
        let root = tape.softmax_cross_entropy(logits, &s.supervised(), scale)?;
        loss += tape.value(root).get(0, 0);
        let g = tape.backward(root)?;
        for (acc, v) in grads.iter_mut().zip(vars) {
            if let Some(gv) = g.get(v) {
                acc.add_assign(gv)?;
            }
        }
    }
    Ok((loss, grads))
}
