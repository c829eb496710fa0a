//! Run configuration, orchestration, model cache and report output.

mod config;
mod render;
mod run;

pub use config::{Mode, RunConfig, SCHEMA_VERSION};
pub use render::{render_csv, render_text, report_render, Rendered, CSV_HEADER};
pub use run::{run, run_config, Failure, ModelSummary, RunOptions, RunOutcome, RunReport, DEFAULT_OUT_DIR};
