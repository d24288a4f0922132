//! Configuration, synthetic raters, persistence, reports and the end-to-end
//! pipeline.

mod analysis;
mod config;
mod pipeline;
mod raters;
mod report;

pub use analysis::{
    analyze, column_name, design, Aliases, DeltaChoice, EvalReport, LearningPoint, StabilityPoint,
    REPORT_VERSION, WM_IRFS,
};
pub use config::{
    DataConfig, FitConfig, PipelineConfig, RndConfig, ScoreConfig, WmConfig, CONFIG_VERSION,
};
pub use pipeline::{
    leading_hash, rerender, run_pipeline, verify_tree, Ensemble, LabeledTrajectories, Pipeline,
    SPLITS,
};
pub use raters::{
    generate_synthetic_ratings, ingest_ratings, write_ratings, Driver, SyntheticRaterModel,
    Transform,
};
pub use report::{
    bar_chart, export_report, figures, parse_report, report_csv, report_json, sign_heatmap,
    ReportFormat, FIGURES, REPORT_CSV, REPORT_JSON,
};
