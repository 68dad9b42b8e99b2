//! Autoregressive sample-path generation over token models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::transformer::{softmax, SequenceModel};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, EOS_ID};

/// A categorical next-token model over a fixed vocabulary.
pub trait TokenModel {
    fn vocab_size(&self) -> usize;

    /// `p(next | prefix)` as a probability vector of length `vocab_size`.
    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;

    /// Per-position next-token distributions: row `t` conditions on `ids[..=t]`.
    fn forward(&self, ids: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        (1..=ids.len()).map(|t| self.next_distribution(&ids[..t])).collect()
    }

    /// `n` paths of `horizon` value tokens, each drawn step by step with the
    /// drawn token appended before the next step. PAD and EOS are never drawn.
    fn sample_paths(&self, context: &[TokenId], horizon: usize, n: usize, seed: u64) -> Result<Vec<Vec<TokenId>>> {
        check_sampling_args(context, horizon, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut paths = Vec::with_capacity(n);
        for _ in 0..n {
            let mut prefix = context.to_vec();
            for _ in 0..horizon {
                let p = self.next_distribution(&prefix)?;
                prefix.push(draw_value_token(&p, &mut rng)?);
            }
            paths.push(prefix.split_off(context.len()));
        }
        Ok(paths)
    }
}

fn check_sampling_args(context: &[TokenId], horizon: usize, n: usize) -> Result<()> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    if horizon == 0 || n == 0 {
        return Err(Error::Config(format!("horizon and sample count must be positive, got {horizon} and {n}")));
    }
    Ok(())
}

/// Inverse-CDF draw from `probs` with PAD and EOS removed and the remaining
/// mass renormalized.
pub fn draw_value_token(probs: &[f64], rng: &mut impl Rng) -> Result<TokenId> {
    let first = (EOS_ID + 1) as usize;
    let mass: f64 = probs[first..].iter().sum();
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Numerical(format!("no probability mass on value tokens ({mass})")));
    }
    let target = rng.random::<f64>() * mass;
    let mut acc = 0.0;
    let mut last_positive = first;
    for (i, &p) in probs.iter().enumerate().skip(first) {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if target < acc {
                return Ok(i as TokenId);
            }
        }
    }
    // rounding left target just above the accumulated sum
    Ok(last_positive as TokenId)
}

impl TokenModel for SequenceModel {
    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let logits = self.logits(prefix)?;
        let v = self.config().vocab_size;
        Ok(softmax(&logits[logits.len() - v..]))
    }

    fn forward(&self, ids: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        SequenceModel::forward(self, ids)
    }

    /// Keeps at most `context_length - prediction_length` context tokens (the
    /// most recent ones) and generates in chunks of `prediction_length`. Each
    /// new chunk re-reads the latest tokens of its own path, so the token
    /// scale stays that of the original context.
    fn sample_paths(&self, context: &[TokenId], horizon: usize, n: usize, seed: u64) -> Result<Vec<Vec<TokenId>>> {
        check_sampling_args(context, horizon, n)?;
        let cfg = self.config();
        let keep = cfg.context_tokens();
        let chunk = cfg.prediction_length;
        let context = &context[context.len().saturating_sub(keep)..];

        let mut base = self.new_decode_state();
        let mut base_logits = Vec::new();
        for &id in context {
            base_logits = self.decode_step(&mut base, id)?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut paths = Vec::with_capacity(n);
        for _ in 0..n {
            let mut history = context.to_vec();
            let mut state = base.clone();
            let mut logits = base_logits.clone();
            for step in 0..horizon {
                if step > 0 && step % chunk == 0 {
                    state = self.new_decode_state();
                    for &id in &history[history.len() - keep.min(history.len())..] {
                        logits = self.decode_step(&mut state, id)?;
                    }
                }
                let token = draw_value_token(&softmax(&logits), &mut rng)?;
                history.push(token);
                if step + 1 < horizon && (step + 1) % chunk != 0 {
                    logits = self.decode_step(&mut state, token)?;
                }
            }
            paths.push(history.split_off(context.len()));
        }
        Ok(paths)
    }
}
