//! Rolling-origin evaluation of a model roster over stations and horizons,
//! rank aggregation and report files.

pub mod backtest;
pub mod config;
pub mod ranking;
pub mod report;

pub use backtest::{backtest, run_experiment, window_origins, CellFailure, EvalReport, EvalRow, Timing};
pub use config::{ModelSpec, PretrainConfig, RunConfig, StationSource, DEFAULT_HORIZONS};
pub use ranking::{degradation_warnings, rank_models, rank_with_ties, summarize, Ranking, SummaryRow};
pub use report::{emit_reports, read_summary, write_plotdata, Figure};
