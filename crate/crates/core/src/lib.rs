//! Tokenized probabilistic forecasting of significant wave height.

pub mod baselines;
pub mod data_io;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod series;
pub mod tokenizer;

pub use error::{Error, Result};
pub use forecast::{Forecast, Forecaster};
pub use series::TimeSeries;

/// Deterministic child seed for `stream` under `master` (splitmix64 mixing).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
