//! The outer search loop, its on-disk run record, and reporting.

pub mod config;
pub mod record;
pub mod report;
pub mod run;

pub use config::{BackendConfig, BackendKind, ConfigError, EnvSet, FrameworkConfig, MockConfig, PromptConfig};
pub use record::{IterationStatus, IterationSummary, Manifest, RecordError};
pub use report::{report, write_report, ReportBundle};
pub use run::{config_backend, resume, run_loop, BackendFactory, Orchestrator, RunError, RunRecord, StopPoint};
