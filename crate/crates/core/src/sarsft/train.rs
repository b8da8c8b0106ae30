use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaceError};
use crate::model::ModelParams;
use crate::sarsft::{
    apply_sar_masking, clip_global_norm, cosine_lr, loss_and_grad, Adam, MaskedSample, SarSftConfig,
    Schedule, TrainingSample,
};

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// `(optimizer step, batch loss)` for every step.
    pub losses: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

/// Masking RNG for sample `index` in `epoch`: independent of batch order and
/// of every other sample.
pub fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_5546);
    rng.set_stream(epoch as u64);
    rng
}

/// Fine-tunes `params` on `corpus` with the masking data path.
///
/// `on_epoch` runs after every epoch with the current parameters.
pub fn train<F>(
    params: &ModelParams,
    corpus: &[TrainingSample],
    config: &SarSftConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochSummary, &ModelParams) -> Result<()>,
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(SpaceError::Config("training corpus is empty".into()));
    }
    let mask = params.config.mask_token_id;
    for s in corpus {
        if s.prompt.contains(&mask) || s.answer.contains(&mask) {
            return Err(SpaceError::Config("corpus contains the mask token".into()));
        }
    }

    let mut params = params.clone();
    let shapes: Vec<(usize, usize)> = params.tensors.iter().map(|t| t.value.shape()).collect();
    let mut adam = Adam::new(&shapes, config.adam_beta1, config.adam_beta2, config.adam_eps);
    let steps_per_epoch = corpus.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut losses = Vec::with_capacity(total_steps);
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng(config.seed, epoch));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<MaskedSample> = chunk
                .iter()
                .map(|&i| {
                    let mut rng = sample_rng(config.seed, epoch, i);
                    apply_sar_masking(&corpus[i], config.k, config.p_ar, mask, &mut rng)
                })
                .collect();
            let (loss, mut grads) = loss_and_grad(&params, &batch)?;
            let step = losses.len();
            if !loss.is_finite() {
                return Err(SpaceError::Diverged { step, loss });
            }
            if config.gradient_clip > 0.0 {
                clip_global_norm(&mut grads, config.gradient_clip);
            }
            let lr = match config.schedule {
                Schedule::Cosine => cosine_lr(config.learning_rate, step, total_steps),
                Schedule::Constant => config.learning_rate,
            };
            let mut values = params.values();
            adam.step(&mut values, &grads, lr);
            params.set_values(&values);
            losses.push((step, loss));
            epoch_loss += loss;
        }
        let summary = EpochSummary {
            epoch,
            steps: losses.len(),
            mean_loss: epoch_loss / steps_per_epoch as f64,
        };
        on_epoch(&summary, &params)?;
    }
    Ok(TrainOutcome { params, losses })
}
