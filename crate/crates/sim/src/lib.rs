//! Synthetic bathymetric surveys: analytic terrain, lawnmower missions with
//! multibeam and dead-reckoning noise, and survey-log files for replay.

pub mod error;
pub mod survey_log;
pub mod scenarios;
pub mod survey;
pub mod terrain;

pub use error::{Error, Result};
pub use survey_log::{ingest_log, SurveyEntry, SurveyLog};
pub use survey::{run_mission, simulate_navigation, simulate_ping, LawnmowerPath, Navigation, SurveyConfig};
pub use terrain::{terrain_height, Bump, NoiseOctave, TerrainField};
