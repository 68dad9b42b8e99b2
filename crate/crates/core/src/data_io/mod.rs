//! Buoy file ingestion, the station cache format, station metadata and
//! Gaussian-process synthetic data.

pub mod cache;
pub mod gp;
pub mod ndbc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{read_cache, write_cache};
pub use gp::{gen_corpus, gen_gp_series, synthetic_station, KernelSpec};
pub use ndbc::{ingest_station, parse_ndbc_stdmet, NdbcParse};

/// Location and record summary of a buoy station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub lat: f64,
    /// Degrees east; western longitudes are negative.
    pub lon: f64,
    pub depth_m: f64,
    pub start: String,
    pub end: String,
    pub median_swh_m: f64,
    pub max_swh_m: f64,
    pub records: u64,
}

impl StationMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_m > 0.0 && (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)) {
            return Err(Error::Domain(format!("station {} has invalid location or depth", self.station_id)));
        }
        Ok(())
    }
}

const STATIONS_JSON: &str = include_str!("../../data/stations.json");

/// The five study stations.
pub fn station_table() -> Result<Vec<StationMeta>> {
    let table: Vec<StationMeta> = serde_json::from_str(STATIONS_JSON)?;
    table.iter().try_for_each(StationMeta::validate)?;
    Ok(table)
}
