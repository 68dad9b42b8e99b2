//! A trained sequence model together with its tokenizer, plus checkpointing.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::training::{batch_loss, fit, TrainStats, WindowSampler};
use super::transformer::SequenceModel;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::forecast::{forecast_with_tokens, Forecast};
use crate::series::TimeSeries;
use crate::tokenizer::{Tokenizer, TokenizerConfig};

const MAGIC: &[u8; 8] = b"WAVECKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    model: ModelConfig,
    tokenizer: TokenizerConfig,
    seed: u64,
    clamp_nonnegative: bool,
    dtype: String,
    param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    model: SequenceModel,
    tokenizer_config: TokenizerConfig,
    tokenizer: Tokenizer,
    pub clamp_nonnegative: bool,
}

fn corpus_values(corpus: &[TimeSeries]) -> Result<Vec<Vec<f64>>> {
    corpus.iter().map(TimeSeries::complete_values).collect()
}

impl ForecastModel {
    /// Freshly initialized model. The vocabulary size in `config` must match
    /// the tokenizer.
    pub fn new(config: ModelConfig, tokenizer_config: TokenizerConfig) -> Result<Self> {
        if config.vocab_size != tokenizer_config.vocab_size() {
            return Err(Error::Config(format!(
                "model vocab_size {} does not match tokenizer vocabulary {}",
                config.vocab_size,
                tokenizer_config.vocab_size()
            )));
        }
        Ok(Self {
            tokenizer: tokenizer_config.build()?,
            model: SequenceModel::new(config)?,
            tokenizer_config,
            clamp_nonnegative: false,
        })
    }

    /// Initializes from `config.seed` and runs `config.max_steps` updates.
    pub fn train(corpus: &[TimeSeries], config: ModelConfig, tokenizer_config: TokenizerConfig) -> Result<(Self, TrainStats)> {
        let mut bundle = Self::new(config, tokenizer_config)?;
        let values = corpus_values(corpus)?;
        let cfg = bundle.model.config();
        WindowSampler::new(&values, cfg.context_tokens(), cfg.prediction_length)?;
        let (steps, seed) = (cfg.max_steps, derive_seed(cfg.seed, 1));
        let stats = fit(&mut bundle.model, &bundle.tokenizer, &values, steps, seed)?;
        Ok((bundle, stats))
    }

    /// Continues training from the current parameters with a fresh optimizer.
    pub fn fine_tune(&mut self, corpus: &[TimeSeries], steps: usize, seed: u64) -> Result<TrainStats> {
        let values = corpus_values(corpus)?;
        let cfg = self.model.config();
        WindowSampler::new(&values, cfg.context_tokens(), cfg.prediction_length)?;
        fit(&mut self.model, &self.tokenizer, &values, steps, seed)
    }

    /// Mean training loss over `n_windows` windows drawn from `corpus`.
    pub fn window_loss(&self, corpus: &[TimeSeries], n_windows: usize, seed: u64) -> Result<f64> {
        let values = corpus_values(corpus)?;
        let cfg = self.model.config();
        let sampler = WindowSampler::new(&values, cfg.context_tokens(), cfg.prediction_length)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = sampler.batch(&self.tokenizer, n_windows, &mut rng)?;
        batch_loss(&self.model, &batch)
    }

    pub fn forecast(&self, context: &[f64], horizon: usize, n_samples: usize, seed: u64) -> Result<Forecast> {
        forecast_with_tokens(
            &self.model,
            &self.tokenizer,
            context,
            self.model.config().context_tokens(),
            horizon,
            n_samples,
            seed,
            self.clamp_nonnegative,
        )
    }

    pub fn model(&self) -> &SequenceModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut SequenceModel {
        &mut self.model
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn tokenizer_config(&self) -> &TokenizerConfig {
        &self.tokenizer_config
    }

    /// Magic bytes, a little-endian u64 header length, a JSON header and the
    /// parameters as little-endian f64.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            model: self.model.config().clone(),
            tokenizer: self.tokenizer_config,
            seed: self.model.config().seed,
            clamp_nonnegative: self.clamp_nonnegative,
            dtype: "f64".into(),
            param_count: self.model.params().len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * header.param_count);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.model.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("checkpoint: {msg}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..header_len])?;
        if header.format_version != FORMAT_VERSION || header.dtype != "f64" {
            return Err(bad("unsupported version or dtype"));
        }
        let block = &body[header_len..];
        if block.len() != 8 * header.param_count {
            return Err(bad("parameter block size does not match header"));
        }
        let params = block.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut bundle = Self::new(header.model.clone(), header.tokenizer)?;
        bundle.model = SequenceModel::from_params(header.model, params)?;
        bundle.clamp_nonnegative = header.clamp_nonnegative;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
