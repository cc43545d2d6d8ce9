//! Configuration, seeding and sweep orchestration.

pub mod config;
pub mod sweep;

pub use config::{parse_config, parse_receiver, ReceiverSpec, SimConfig};
pub use sweep::{
    dump_records, run_sweep, trial_seed, version_tag, write_outputs, DiagnosticRow, RunManifest, SweepResult,
};
