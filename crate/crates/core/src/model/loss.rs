use serde::{Deserialize, Serialize};

use super::gpt::DropoutRng;
use super::ops::Scalar;
use super::params::Params;
use crate::error::{Error, Result};

/// Which target positions contribute to the next-token loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum LossMask {
    Full,
    /// Only the last `result_width` targets (the answer digits).
    AnswerOnly { result_width: usize },
}

impl LossMask {
    fn includes(&self, target_index: usize, seq_len: usize) -> bool {
        match *self {
            LossMask::Full => true,
            LossMask::AnswerOnly { result_width } => target_index + result_width >= seq_len,
        }
    }
}

fn pack_batch<S: AsRef<[u8]>>(batch: &[S]) -> Result<(Vec<u8>, Vec<u8>, usize)> {
    let first = batch
        .first()
        .ok_or(Error::Empty("loss batch"))?
        .as_ref()
        .len();
    if first < 2 {
        return Err(Error::Structure("sequences need at least two tokens".into()));
    }
    let seq = first - 1;
    let mut inputs = Vec::with_capacity(batch.len() * seq);
    let mut targets = Vec::with_capacity(batch.len() * seq);
    for s in batch {
        let s = s.as_ref();
        if s.len() != first {
            return Err(Error::Structure(format!(
                "ragged batch: lengths {first} and {}",
                s.len()
            )));
        }
        inputs.extend_from_slice(&s[..seq]);
        targets.extend_from_slice(&s[1..]);
    }
    Ok((inputs, targets, seq))
}

/// Mean cross-entropy over unmasked targets and its exact gradient.
/// Each sequence is `inputs ++ [last target]`, i.e. one token longer than the model input.
pub fn loss_and_grads<T: Scalar, S: AsRef<[u8]>>(
    params: &Params<T>,
    batch: &[S],
    mask: LossMask,
    rng: DropoutRng<'_>,
) -> Result<(f64, Params<T>)> {
    let (inputs, targets, seq) = pack_batch(batch)?;
    let cache = params.forward_batch(&inputs, batch.len(), seq, rng)?;
    let v = params.config.vocab_size;
    let count = (0..seq).filter(|&t| mask.includes(t + 1, seq + 1)).count() * batch.len();
    if count == 0 {
        return Err(Error::Structure("loss mask excludes every position".into()));
    }
    let inv = T::lit(1.0 / count as f64);

    let mut dlogits = vec![T::zero(); cache.logits.len()];
    let mut total = 0.0f64;
    for b in 0..batch.len() {
        let mut seq_loss = 0.0f64;
        for t in 0..seq {
            if !mask.includes(t + 1, seq + 1) {
                continue;
            }
            let row = (b * seq + t) * v;
            let probs = &mut dlogits[row..row + v];
            probs.copy_from_slice(&cache.logits[row..row + v]);
            super::ops::softmax_in_place(probs);
            let target = targets[b * seq + t] as usize;
            seq_loss -= probs[target].to_f64().unwrap_or(f64::NAN).ln();
            probs[target] = probs[target] - T::one();
            for p in probs.iter_mut() {
                *p = *p * inv;
            }
        }
        if !seq_loss.is_finite() {
            return Err(Error::NonFiniteLoss { index: b });
        }
        total += seq_loss;
    }

    let mut grads = params.zeros_like();
    params.backward(&cache, &dlogits, &mut grads);
    Ok((total / count as f64, grads))
}

/// Loss without gradients, in evaluation mode.
pub fn batch_loss<T: Scalar, S: AsRef<[u8]>>(
    params: &Params<T>,
    batch: &[S],
    mask: LossMask,
) -> Result<f64> {
    let (inputs, targets, seq) = pack_batch(batch)?;
    let cache = params.forward_batch(&inputs, batch.len(), seq, None)?;
    let v = params.config.vocab_size;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut row_buf = vec![T::zero(); v];
    for (i, &target) in targets.iter().enumerate() {
        if !mask.includes(i % seq + 1, seq + 1) {
            continue;
        }
        row_buf.copy_from_slice(&cache.logits[i * v..(i + 1) * v]);
        super::ops::softmax_in_place(&mut row_buf);
        let term = -row_buf[target as usize].to_f64().unwrap_or(f64::NAN).ln();
        if !term.is_finite() {
            return Err(Error::NonFiniteLoss { index: i / seq });
        }
        total += term;
        count += 1;
    }
    Ok(total / count.max(1) as f64)
}
