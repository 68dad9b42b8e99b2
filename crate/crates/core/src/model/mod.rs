//! The autoregressive categorical model, its training loop and sampling.

pub mod bundle;
pub mod config;
pub mod gradcheck;
pub mod markov;
pub mod sampling;
pub mod training;
pub mod transformer;

pub use bundle::ForecastModel;
pub use config::ModelConfig;
pub use markov::MarkovModel;
pub use sampling::TokenModel;
pub use training::{TrainStats, Trainer, TrainingSequence};
pub use transformer::{param_count, SequenceModel};
