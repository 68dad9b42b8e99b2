//! Cross-entropy training over tokenized windows.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::transformer::SequenceModel;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Tokenizer, EOS_ID};

/// Context tokens, target tokens and a closing EOS. Only the target and EOS
/// labels are scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSequence {
    ids: Vec<TokenId>,
    context_len: usize,
}

impl TrainingSequence {
    pub fn new(ids: Vec<TokenId>, context_len: usize) -> Result<Self> {
        if context_len == 0 {
            return Err(Error::MalformedTarget("context must hold at least one token".into()));
        }
        if ids.len() <= context_len || ids.last() != Some(&EOS_ID) {
            return Err(Error::MalformedTarget("target region must end with EOS".into()));
        }
        if ids[..ids.len() - 1].contains(&EOS_ID) {
            return Err(Error::MalformedTarget("EOS only allowed as the final token".into()));
        }
        Ok(Self { ids, context_len })
    }

    /// Tokenizes a window, scaling both parts by the context's scale.
    pub fn from_window(tokenizer: &Tokenizer, context: &[f64], target: &[f64]) -> Result<Self> {
        let ctx = tokenizer.encode(context)?;
        let tgt = tokenizer.encode_with(target, ctx.scaler)?;
        let mut ids = ctx.ids;
        ids.extend(tgt.ids);
        ids.push(EOS_ID);
        Self::new(ids, context.len())
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    /// Model input: every token except the final EOS.
    pub fn inputs(&self) -> &[TokenId] {
        &self.ids[..self.ids.len() - 1]
    }

    /// Input positions whose next-token label is scored.
    pub fn scored_positions(&self) -> Vec<usize> {
        (self.context_len - 1..self.ids.len() - 1).collect()
    }

    pub fn labels(&self) -> &[TokenId] {
        &self.ids[self.context_len..]
    }
}

/// Negative log-likelihood per scored position (target tokens plus EOS).
pub fn sequence_loss(model: &SequenceModel, seq: &TrainingSequence) -> Result<f64> {
    model.positional_loss(seq.inputs(), &seq.scored_positions(), seq.labels())
}

/// Mean of per-sequence losses.
pub fn batch_loss(model: &SequenceModel, batch: &[TrainingSequence]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut total = 0.0;
    for seq in batch {
        total += sequence_loss(model, seq)?;
    }
    Ok(total / batch.len() as f64)
}

/// Batch loss and its gradient with respect to every parameter.
pub fn batch_loss_grad(model: &SequenceModel, batch: &[TrainingSequence]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut grad = vec![0.0; model.params().len()];
    let w = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for seq in batch {
        total += model.positional_loss_grad(seq.inputs(), &seq.scored_positions(), seq.labels(), w, &mut grad)?;
    }
    Ok((total * w, grad))
}

const GRAD_CLIP: f64 = 1.0;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with a fixed learning rate and global gradient-norm clipping.
#[derive(Debug, Clone)]
pub struct Trainer {
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Trainer {
    pub fn new(model: &SequenceModel) -> Self {
        let n = model.params().len();
        Self {
            learning_rate: model.config().learning_rate,
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    /// One optimizer step on `batch`; returns the pre-update loss.
    pub fn step(&mut self, model: &mut SequenceModel, batch: &[TrainingSequence]) -> Result<f64> {
        let (loss, mut grad) = batch_loss_grad(model, batch)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss became {loss}")));
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > GRAD_CLIP {
            let k = GRAD_CLIP / norm;
            grad.iter_mut().for_each(|g| *g *= k);
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let lr = self.learning_rate;
        for (((p, g), m), v) in model.params_mut().iter_mut().zip(&grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite parameter after update".into()));
        }
        Ok(loss)
    }
}

/// Loss trace and wall-clock time of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub losses: Vec<f64>,
    pub seconds: f64,
}

/// Draws random fixed-length windows from a corpus of complete series.
pub struct WindowSampler<'a> {
    corpus: &'a [Vec<f64>],
    context: usize,
    horizon: usize,
}

impl<'a> WindowSampler<'a> {
    pub fn new(corpus: &'a [Vec<f64>], context: usize, horizon: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::TooShort("training corpus is empty".into()));
        }
        let need = context + horizon;
        if let Some((i, s)) = corpus.iter().enumerate().find(|(_, s)| s.len() < need) {
            return Err(Error::TooShort(format!(
                "corpus series {i} has {} values, training windows need {need}",
                s.len()
            )));
        }
        Ok(Self { corpus, context, horizon })
    }

    pub fn sample(&self, tokenizer: &Tokenizer, rng: &mut impl Rng) -> Result<TrainingSequence> {
        let series = &self.corpus[rng.random_range(0..self.corpus.len())];
        let span = self.context + self.horizon;
        let start = rng.random_range(0..=series.len() - span);
        let window = &series[start..start + span];
        TrainingSequence::from_window(tokenizer, &window[..self.context], &window[self.context..])
    }

    pub fn batch(&self, tokenizer: &Tokenizer, size: usize, rng: &mut impl Rng) -> Result<Vec<TrainingSequence>> {
        (0..size).map(|_| self.sample(tokenizer, rng)).collect()
    }
}

/// Runs `steps` optimizer updates on windows drawn from `corpus`.
pub fn fit(model: &mut SequenceModel, tokenizer: &Tokenizer, corpus: &[Vec<f64>], steps: usize, seed: u64) -> Result<TrainStats> {
    let cfg = model.config().clone();
    let sampler = WindowSampler::new(corpus, cfg.context_tokens(), cfg.prediction_length)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trainer = Trainer::new(model);
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch = sampler.batch(tokenizer, cfg.batch_size, &mut rng)?;
        losses.push(trainer.step(model, &batch)?);
    }
    Ok(TrainStats {
        losses,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Fraction of target positions where the most likely value token equals the label.
pub fn next_token_accuracy(model: &SequenceModel, sequences: &[TrainingSequence]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for seq in sequences {
        let probs = model.forward(seq.inputs())?;
        for (pos, &label) in seq.scored_positions().into_iter().zip(seq.labels()) {
            if label == EOS_ID {
                continue;
            }
            let row = &probs[pos];
            let best = (2..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
            hits += usize::from(best as TokenId == label);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Shape("no target positions to score".into()));
    }
    Ok(hits as f64 / total as f64)
}
