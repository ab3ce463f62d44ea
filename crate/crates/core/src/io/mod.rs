//! Configuration, trace and report formats, and the command-line driver.

pub mod cli;
pub mod config;
pub mod formats;
pub mod trace;

pub use config::{load_config, load_config_file, preset, resolve_config, ConfigError, ScenarioConfig, PRESET_NAMES};
pub use trace::{parse_trace, write_trace, SkeletonTraceRecord, TraceAgent, TraceError};
