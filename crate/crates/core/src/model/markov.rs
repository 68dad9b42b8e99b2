//! Count-based k-gram model with add-one smoothing. Shares the sampling
//! interface with the neural model so the forecasting pipeline can be checked
//! without training anything.

use std::collections::HashMap;

use super::sampling::TokenModel;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, PAD_ID};

#[derive(Debug, Clone)]
pub struct MarkovModel {
    order: usize,
    vocab_size: usize,
    counts: HashMap<Vec<TokenId>, Vec<u64>>,
}

impl MarkovModel {
    /// Counts every transition in `corpus`. Prefixes shorter than `order`
    /// are left-padded with PAD.
    pub fn fit(corpus: &[Vec<TokenId>], order: usize, vocab_size: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::Config(format!("k-gram order must be 1 or 2, got {order}")));
        }
        if corpus.iter().all(|s| s.len() < 2) {
            return Err(Error::TooShort("k-gram corpus has no transitions".into()));
        }
        let mut model = Self {
            order,
            vocab_size,
            counts: HashMap::new(),
        };
        for seq in corpus {
            for t in 1..seq.len() {
                let next = seq[t];
                if next as usize >= vocab_size {
                    return Err(Error::BadToken(next));
                }
                let key = model.key(&seq[..t]);
                model.counts.entry(key).or_insert_with(|| vec![0; vocab_size])[next as usize] += 1;
            }
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn key(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let mut key = vec![PAD_ID; self.order.saturating_sub(prefix.len())];
        key.extend_from_slice(&prefix[prefix.len().saturating_sub(self.order)..]);
        key
    }
}

impl TokenModel for MarkovModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        if let Some(&bad) = prefix.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::BadToken(bad));
        }
        let v = self.vocab_size as f64;
        Ok(match self.counts.get(&self.key(prefix)) {
            Some(c) => {
                let total = c.iter().sum::<u64>() as f64 + v;
                c.iter().map(|&k| (k as f64 + 1.0) / total).collect()
            }
            None => vec![1.0 / v; self.vocab_size],
        })
    }
}
