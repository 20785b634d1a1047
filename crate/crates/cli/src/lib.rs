//! Front end for `nhfermion`: TOML run configs, parameter sweeps and
//! CSV / JSON outputs with a run manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
