use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::{DEFAULT_NPTS_ALPHA, DEFAULT_SEASON};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::series::SplitSpec;
use crate::tokenizer::TokenizerConfig;

pub const DEFAULT_HORIZONS: [usize; 13] = [1, 3, 6, 12, 24, 36, 48, 60, 72, 84, 96, 108, 120];

/// One roster entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelSpec {
    SeasonalNaive {
        #[serde(default = "default_season")]
        season: usize,
    },
    #[serde(rename = "NPTS")]
    Npts {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Theta,
    #[serde(rename = "SES")]
    Ses,
    Holt,
    /// The pretrained sequence model applied without station data.
    ZeroShot,
    /// The pretrained sequence model fine-tuned on each station's train split.
    FineTuned {
        #[serde(default = "default_fine_tune_steps")]
        steps: usize,
    },
    /// Count-based k-gram token model fitted on each train split.
    Markov {
        #[serde(default = "default_order")]
        order: usize,
    },
}

fn default_season() -> usize {
    DEFAULT_SEASON
}
fn default_alpha() -> f64 {
    DEFAULT_NPTS_ALPHA
}
fn default_fine_tune_steps() -> usize {
    200
}
fn default_order() -> usize {
    1
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::SeasonalNaive { .. } => "SeasonalNaive".into(),
            ModelSpec::Npts { .. } => "NPTS".into(),
            ModelSpec::Theta => "Theta".into(),
            ModelSpec::Ses => "SES".into(),
            ModelSpec::Holt => "Holt".into(),
            ModelSpec::ZeroShot => "ZeroShot".into(),
            ModelSpec::FineTuned { .. } => "FineTuned".into(),
            ModelSpec::Markov { order } => format!("Markov{order}"),
        }
    }

    pub fn needs_pretraining(&self) -> bool {
        matches!(self, ModelSpec::ZeroShot | ModelSpec::FineTuned { .. })
    }

    /// The default comparison set.
    pub fn default_roster() -> Vec<ModelSpec> {
        vec![
            ModelSpec::FineTuned {
                steps: default_fine_tune_steps(),
            },
            ModelSpec::ZeroShot,
            ModelSpec::SeasonalNaive { season: DEFAULT_SEASON },
            ModelSpec::Theta,
            ModelSpec::Ses,
            ModelSpec::Npts { alpha: DEFAULT_NPTS_ALPHA },
        ]
    }
}

/// Where a station's series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum StationSource {
    /// A cache CSV written by ingestion.
    Cache { station_id: String, path: PathBuf },
    /// A generated station-like series.
    Synthetic { station_id: String, length: usize, seed: u64 },
}

impl StationSource {
    pub fn station_id(&self) -> &str {
        match self {
            StationSource::Cache { station_id, .. } | StationSource::Synthetic { station_id, .. } => station_id,
        }
    }
}

/// How the shared sequence model is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    pub tokenizer: TokenizerConfig,
    pub corpus_series: usize,
    pub corpus_length: usize,
    pub corpus_seed: u64,
    /// Load this checkpoint instead of training.
    pub checkpoint: Option<PathBuf>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            tokenizer: TokenizerConfig::default(),
            corpus_series: 64,
            corpus_length: 1024,
            corpus_seed: 0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub horizons: Vec<usize>,
    /// Context points handed to every forecaster.
    pub context_length: usize,
    pub n_windows: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub models: Vec<ModelSpec>,
    pub stations: Vec<StationSource>,
    pub split: SplitSpec,
    pub negate_scores: bool,
    /// Clamp sequence-model forecasts at zero. Unset means on for cached
    /// buoy data and off for synthetic stations.
    pub clamp_nonnegative: Option<bool>,
    pub pretrain: PretrainConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizons: DEFAULT_HORIZONS.to_vec(),
            context_length: 104,
            n_windows: 50,
            n_samples: 20,
            seed: 0,
            models: ModelSpec::default_roster(),
            stations: Vec::new(),
            split: SplitSpec::default(),
            negate_scores: false,
            clamp_nonnegative: None,
            pretrain: PretrainConfig::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons[0] == 0 || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("horizons must be positive and strictly increasing: {:?}", self.horizons)));
        }
        if self.n_windows == 0 || self.n_samples == 0 || self.context_length == 0 {
            return Err(Error::Config("n_windows, n_samples and context_length must be positive".into()));
        }
        if self.models.is_empty() || self.stations.is_empty() {
            return Err(Error::Config("roster needs at least one model and one station".into()));
        }
        let mut names: Vec<String> = self.models.iter().map(ModelSpec::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("model names in the roster must be unique".into()));
        }
        self.split.validate()?;
        if self.models.iter().any(ModelSpec::needs_pretraining) {
            self.pretrain.model.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig {
            stations: vec![StationSource::Synthetic {
                station_id: "s1".into(),
                length: 800,
                seed: 3,
            }],
            ..RunConfig::default()
        };
        cfg.models.push(ModelSpec::Markov { order: 2 });
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"models": [{"model": "SeasonalNaive"}, {"model": "NPTS"}],
                "stations": [{"source": "synthetic", "station_id": "a", "length": 500, "seed": 1}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.horizons, DEFAULT_HORIZONS.to_vec());
        assert_eq!(cfg.models[0], ModelSpec::SeasonalNaive { season: 24 });
        assert_eq!(cfg.n_windows, 50);
    }

    #[test]
    fn invalid_configs() {
        let base = RunConfig {
            stations: vec![StationSource::Synthetic {
                station_id: "s".into(),
                length: 800,
                seed: 3,
            }],
            ..RunConfig::default()
        };
        assert!(base.validate().is_ok());
        for bad in [
            RunConfig { horizons: vec![3, 1], ..base.clone() },
            RunConfig { n_windows: 0, ..base.clone() },
            RunConfig { models: vec![ModelSpec::Theta, ModelSpec::Theta], ..base.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
