//! Configuration, experiment commands and their output files.

mod config;
pub mod format;
mod run;

pub use config::{
    DumpConfig, ExperimentConfig, Overrides, PredictorConfig, Prop1Config, ScheduleConfig,
    SourceConfig, SourceKind,
};
pub use run::{
    build_sources, cmd_dump, cmd_prop1, cmd_sweep, cmd_train, initial_noise, reference_samples,
    run_dump, run_prop1, run_sweep, Dump, SweepOutput,
};

use crate::error::FocaError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

/// Process exit code for a failed command.
pub fn exit_code(e: &FocaError) -> i32 {
    match e {
        FocaError::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}
