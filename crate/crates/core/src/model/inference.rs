use super::gpt::{DropoutRng, Mode};
use super::ops::{softmax_in_place, Scalar};
use super::params::Params;
use crate::error::{Error, Result};
use crate::parallel;

/// Output of one single-sequence forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub positions: usize,
    pub vocab_size: usize,
    pub d_model: usize,
    /// `[positions × vocab_size]`.
    pub logits: Vec<T>,
    /// Final normalized hidden states, stored position-major `[positions × d_model]`;
    /// column `t` of the representation matrix is `hidden_at(t)`.
    pub hidden: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn logits_row(&self, t: usize) -> &[T] {
        &self.logits[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    pub fn hidden_at(&self, t: usize) -> &[T] {
        &self.hidden[t * self.d_model..(t + 1) * self.d_model]
    }

    /// Softmax of each logits row, computed in double precision.
    pub fn probabilities(&self) -> Vec<Vec<f64>> {
        (0..self.positions)
            .map(|t| {
                let mut row: Vec<f64> = self
                    .logits_row(t)
                    .iter()
                    .map(|v| v.to_f64().unwrap_or(f64::NAN))
                    .collect();
                softmax_in_place(&mut row);
                row
            })
            .collect()
    }
}

pub fn forward<T: Scalar>(
    params: &Params<T>,
    tokens: &[u8],
    mode: Mode,
    rng: DropoutRng<'_>,
) -> Result<ForwardTrace<T>> {
    let rng = match (mode, rng) {
        (Mode::Eval, _) => None,
        (Mode::Train, Some(r)) => Some(r),
        (Mode::Train, None) => {
            return Err(Error::Structure("train mode needs a dropout generator".into()))
        }
    };
    let cache = params.forward_batch(tokens, 1, tokens.len(), rng)?;
    Ok(ForwardTrace {
        positions: tokens.len(),
        vocab_size: params.config.vocab_size,
        d_model: params.config.d_model,
        logits: cache.logits,
        hidden: cache.hidden,
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_generate<T: Scalar>(params: &Params<T>, prefix: &[u8], steps: usize) -> Result<Vec<u8>> {
    let mut out = greedy_generate_batch(params, &[prefix], steps)?;
    Ok(out.pop().expect("one sequence"))
}

/// Greedy decoding of equal-length prefixes as one batch. Returns full sequences.
pub fn greedy_generate_batch<T: Scalar, S: AsRef<[u8]>>(
    params: &Params<T>,
    prefixes: &[S],
    steps: usize,
) -> Result<Vec<Vec<u8>>> {
    let Some(first) = prefixes.first() else {
        return Ok(Vec::new());
    };
    let len = first.as_ref().len();
    if len == 0 {
        return Err(Error::Structure("greedy decoding needs a non-empty prefix".into()));
    }
    if len + steps > params.config.context_window + 1 {
        return Err(Error::Structure(format!(
            "prefix {len} + {steps} steps exceeds context window {} + 1",
            params.config.context_window
        )));
    }
    let mut seqs: Vec<Vec<u8>> = prefixes
        .iter()
        .map(|p| {
            let p = p.as_ref();
            if p.len() == len {
                Ok(p.to_vec())
            } else {
                Err(Error::Structure("prefixes in a batch must share one length".into()))
            }
        })
        .collect::<Result<_>>()?;
    let v = params.config.vocab_size;
    for step in 0..steps {
        let cur = len + step;
        let flat: Vec<u8> = seqs.iter().flatten().copied().collect();
        let cache = params.forward_batch(&flat, seqs.len(), cur, None)?;
        for (b, seq) in seqs.iter_mut().enumerate() {
            let row = (b * cur + cur - 1) * v;
            seq.push(argmax(&cache.logits[row..row + v]) as u8);
        }
    }
    Ok(seqs)
}

const DECODE_SHARD: usize = 256;

/// Greedily decodes `steps` tokens for every prefix and returns only the generated tokens.
/// Work is sharded across `MODLENS_THREADS` workers; output order follows input order.
pub fn generate_answers<T: Scalar, S: AsRef<[u8]> + Sync>(
    params: &Params<T>,
    prefixes: &[S],
    steps: usize,
) -> Result<Vec<Vec<u8>>> {
    parallel::map_shards(prefixes, DECODE_SHARD, |shard| {
        let full = greedy_generate_batch(params, shard, steps)?;
        Ok(full
            .into_iter()
            .zip(shard)
            .map(|(mut s, p)| s.split_off(p.as_ref().len()))
            .collect())
    })
}

/// Per-position next-token distributions `softmax(W·X[:, t])` in evaluation mode.
pub fn next_token_distribution<T: Scalar>(params: &Params<T>, tokens: &[u8]) -> Result<Vec<Vec<f64>>> {
    Ok(forward(params, tokens, Mode::Eval, None)?.probabilities())
}

/// Batched [`next_token_distribution`] for equal-length inputs.
pub fn next_token_distributions<T: Scalar, S: AsRef<[u8]> + Sync>(
    params: &Params<T>,
    inputs: &[S],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let v = params.config.vocab_size;
    parallel::map_shards(inputs, DECODE_SHARD, |shard| {
        let seq = shard[0].as_ref().len();
        if shard.iter().any(|s| s.as_ref().len() != seq) {
            return Err(Error::Structure("batched inputs must share one length".into()));
        }
        let flat: Vec<u8> = shard.iter().flat_map(|s| s.as_ref().iter().copied()).collect();
        let cache = params.forward_batch(&flat, shard.len(), seq, None)?;
        Ok(cache
            .logits
            .chunks(seq * v)
            .map(|rows| {
                rows.chunks(v)
                    .map(|r| {
                        let mut row: Vec<f64> =
                            r.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
                        softmax_in_place(&mut row);
                        row
                    })
                    .collect()
            })
            .collect())
    })
}

/// Column `position` of the final representation matrix, in evaluation mode.
pub fn hidden_representation<T: Scalar>(
    params: &Params<T>,
    tokens: &[u8],
    position: usize,
) -> Result<Vec<T>> {
    if position >= tokens.len() {
        return Err(Error::Structure(format!(
            "position {position} out of range for {} tokens",
            tokens.len()
        )));
    }
    // Causality: only tokens up to `position` matter.
    let trace = forward(params, &tokens[..=position], Mode::Eval, None)?;
    Ok(trace.hidden_at(position).to_vec())
}

/// Batched [`hidden_representation`] for equal-length inputs.
pub fn hidden_representations<T: Scalar, S: AsRef<[u8]> + Sync>(
    params: &Params<T>,
    inputs: &[S],
    position: usize,
) -> Result<Vec<Vec<T>>> {
    let c = params.config.d_model;
    parallel::map_shards(inputs, DECODE_SHARD, |shard| {
        let seq = position + 1;
        let mut flat = Vec::with_capacity(shard.len() * seq);
        for s in shard {
            let s = s.as_ref();
            if s.len() <= position {
                return Err(Error::Structure(format!(
                    "position {position} out of range for {} tokens",
                    s.len()
                )));
            }
            flat.extend_from_slice(&s[..seq]);
        }
        let cache = params.forward_batch(&flat, shard.len(), seq, None)?;
        Ok((0..shard.len())
            .map(|b| {
                let row = b * seq + position;
                cache.hidden[row * c..(row + 1) * c].to_vec()
            })
            .collect())
    })
}
