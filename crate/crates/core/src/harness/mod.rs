//! Oracle predictor, synthetic data and the end-to-end pipeline.

mod oracle;
mod pipeline;
mod synth;

pub use oracle::{oracle_predict, OracleConfig, OracleMode};
pub use pipeline::{
    predict_all, run_pipeline, PipelineRun, PREDICTIONS_FILE, RECORDS_DIR, REPORT_FILE, RUN_FILE,
    SCHEDULE_FILE, SPLIT_FILE,
};
pub use synth::{synthetic_manifest, SynthConfig, SYNTH_VOCABULARY};
