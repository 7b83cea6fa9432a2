//! Repeated train/test runs comparing the trainers, with CSV output.

mod plan;
mod report;
mod run;

pub use plan::{EvalMode, ExperimentPlan, RegSettings, Trainer};
pub use report::{summarize, summary_to_csv, SummaryRow};
pub use run::{
    evaluate, format_number, results_to_csv, run_experiment, run_experiment_with, train, ExperimentData, ResultRow,
    TrainedModel, TrainerSettings, RESULT_COLUMNS,
};
