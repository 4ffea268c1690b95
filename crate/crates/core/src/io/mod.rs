//! File formats: TOML configuration and CSV outputs.

pub mod config;
pub mod csv;

pub use config::{load_scenario, parse_scenario, CampaignSettings, ConfigFile, RunConfig};
