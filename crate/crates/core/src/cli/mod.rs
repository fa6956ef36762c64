//! Experiment pipeline, artifact files and reports behind the `l2p` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, FronthaulSpec, NetworkSpec};
pub use io::{load, save, Artifact, Dataset, InstanceSet, IoError, Report};
pub use pipeline::{run_pipeline, EvalSummary, Mode, PipelineError};
pub use report::{parse_delimited, report_emit, ReportError, ReportFormat, ReportRow};
