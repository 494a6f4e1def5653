//! Declarative experiments: config files, staged runs and reports.

mod config;
mod report;
mod run;

pub use config::{
    AverageMode, DataConfig, DataSource, EnsembleConfig, EnsembleMode, ExperimentConfig, FileFormat,
};
pub use report::{
    aggregate_map, format_per_mille, per_mille, report_table, Aggregate, ExperimentReport,
    ReportRow, ReportTable, Stat,
};
pub use run::{
    ensemble_partitions, make_ensemble, run, run_stages, teacher_jobs, teacher_seed,
    ExperimentData, SeedPaths, Stage, TeacherJob, TEACHER_AVERAGE, WORKERS_ENV,
};
