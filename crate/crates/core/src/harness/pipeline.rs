//! End-to-end run: split, build, schedule, predict, evaluate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::oracle::{oracle_predict, OracleConfig};
use crate::dataset::{build_all, split_images, Split, TaskDatasets, TaskRecord};
use crate::error::{Error, Result, StageContext};
use crate::io;
use crate::metrics::{evaluate, EvalReport, Prediction};
use crate::mixture::{build_schedule, compute_weights};
use crate::model::{validate_manifest, Manifest};

pub const SPLIT_FILE: &str = "split.json";
pub const RECORDS_DIR: &str = "records";
pub const SCHEDULE_FILE: &str = "schedule.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions/test.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const RUN_FILE: &str = "run.json";

/// Inputs of a run and, once finished, the files it wrote relative to `out_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Seeds the split, the negative VQA questions and the schedule.
    pub seed: u64,
    pub oracle: OracleConfig,
    pub batch_size: usize,
    pub epoch_batches: u64,
    #[serde(default)]
    pub artifacts: Vec<String>,
}

impl PipelineRun {
    pub fn new(
        manifest: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
        seed: u64,
        oracle: OracleConfig,
    ) -> Self {
        Self {
            manifest: manifest.into(),
            out_dir: out_dir.into(),
            seed,
            oracle,
            batch_size: 8,
            epoch_batches: 30,
            artifacts: Vec::new(),
        }
    }
}

/// Oracle outputs for every record, in record order.
pub fn predict_all(records: &[TaskRecord], oracle: &OracleConfig) -> Vec<Prediction> {
    records
        .iter()
        .map(|r| Prediction {
            task: r.task,
            image_id: r.image_id.clone(),
            output: oracle_predict(r, oracle),
        })
        .collect()
}

fn split_records(datasets: &TaskDatasets, split: Split) -> Vec<TaskRecord> {
    datasets
        .tasks
        .values()
        .flat_map(|r| r.get(split).iter().cloned())
        .collect()
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Run every stage and write the artifacts under `run.out_dir`.
pub fn run_pipeline(run: &PipelineRun) -> Result<EvalReport> {
    run.oracle.validate().stage("configure")?;
    let root = run.out_dir.as_path();
    let manifest = Manifest::load(&run.manifest).stage("load manifest")?;
    let violations = validate_manifest(&manifest);
    if !violations.is_empty() {
        return Err(Error::InvalidManifest(violations)).stage("validate");
    }
    let mut written: Vec<PathBuf> = Vec::new();

    let split = split_images(&manifest, run.seed).stage("split")?;
    let path = root.join(SPLIT_FILE);
    io::write_json(&path, &split).stage("split")?;
    written.push(path);

    let datasets = build_all(&manifest, &split, run.seed).stage("build")?;
    written.extend(datasets.write(root.join(RECORDS_DIR)).stage("build")?);

    let sizes = datasets
        .sizes(Split::Train)
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .collect();
    let weights = compute_weights(&sizes).stage("schedule")?;
    let schedule = build_schedule(
        &weights,
        &sizes,
        run.batch_size,
        run.epoch_batches,
        run.seed,
    )
    .stage("schedule")?;
    let path = root.join(SCHEDULE_FILE);
    io::write_jsonl(&path, &schedule.entries).stage("schedule")?;
    written.push(path);

    let test = split_records(&datasets, Split::Test);
    let predictions = predict_all(&test, &run.oracle);
    let path = root.join(PREDICTIONS_FILE);
    io::write_jsonl(&path, &predictions).stage("predict")?;
    written.push(path);

    let report = evaluate(&test, &predictions, Some(&manifest)).stage("evaluate")?;
    let path = root.join(REPORT_FILE);
    io::write_text(&path, &report.to_json()).stage("evaluate")?;
    written.push(path);

    let mut record = run.clone();
    record.artifacts = written.iter().map(|p| relative(p, root)).collect();
    record.artifacts.push(RUN_FILE.to_string());
    record.artifacts.sort();
    io::write_json(root.join(RUN_FILE), &record).stage("record run")?;
    Ok(report)
}
