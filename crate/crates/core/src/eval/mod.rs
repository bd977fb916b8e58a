mod auroc;
pub mod experiment;
pub mod heatmap;
pub mod report;
pub mod stats;

pub use auroc::{auroc, ScoredSet};
pub use experiment::{
    auroc_by_role, evaluate_split, load_source, prepare_run, run_experiment, ExperimentOutcome, PreparedRun,
    RunOutcome, SplitAuroc,
};
pub use heatmap::{heatmap, BoundingBox, GridSpec, HeatmapGrid};
pub use report::{AurocColumn, EvalReport, ModelRow, RunFailure};
pub use stats::{welch, welch_t_test, WelchResult};
