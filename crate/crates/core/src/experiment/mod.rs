//! Config-driven runs, named suites and report files.

mod config;
mod inline;
mod output;
mod run;
mod suites;

pub use config::{
    load_config, Check, CheckConfig, EnsembleConfig, ExperimentConfig, Format, GridConfig, ItoProcess, OutputConfig,
    PicardConfig, ProblemConfig, SchemeConfig,
};
pub use inline::{CoefficientTable, InlineGenerator, InlineProblem, InlineTerminal, OddTerm};
pub use output::{
    checks_csv, norms_csv, picard_csv, to_json, write_outputs, Manifest, ManifestEntry, CHECKS_COLUMNS, NORMS_COLUMNS,
    PICARD_COLUMNS,
};
pub use run::{
    brownian_process, counting_process, oracle_errors, oracle_report, run_experiment, OracleErrors, PicardRecord,
    ReportBundle, RunMeta, Timing,
};
pub use suites::*;
