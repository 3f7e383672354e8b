//! Experiment driver behind the `eigenflow` binary.

pub mod config;
pub mod fieldio;
pub mod init;
pub mod run;

pub use config::{ExperimentConfig, InitSpec, Method, Preset};
pub use fieldio::{read_field, write_pgm, write_text};
pub use init::generate_init;
pub use run::{exit_code, run_batch, run_experiment, RunOutcome, RunStatus};
