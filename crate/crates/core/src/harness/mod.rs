//! Run orchestration: configs, the training loop, evaluation, logs,
//! checkpoints, plots and comparisons.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod eval;
pub mod logs;
pub mod plot;
pub mod run;


pub use compare::{compare_runs, Comparison};
pub use config::{EvalScope, RunConfig};
pub use eval::{EvalReport, TaskLoss};
pub use run::{resume, resume_with, run, Params, RunSummary, StopReason, Trainer};
