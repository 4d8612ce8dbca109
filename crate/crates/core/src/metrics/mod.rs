//! Evaluation: classification, text generation, mAP and the training loss.

mod ap;
mod classification;
mod loss;
mod report;
mod text;
mod vqa;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use ap::{
    average_precision, map_at_50, APResult, ClassAP, ImageInstances, Labeled, PRPoint, Region,
    IOU_THRESHOLD,
};
pub use classification::{classification_metrics, ClassStats, ClassificationResult, OTHER};
pub use loss::{sequence_nll, LossMask};
pub use report::{EvalReport, Metric};
pub use text::{align, bleu4, meteor_lite, meteor_pair, rouge_l, rouge_l_pair, tokenize};
pub use vqa::{evaluate_vqa, Accuracy, TextScores, VqaResult};

use crate::dataset::{prepare_finding, TaskRecord};
use crate::error::{Error, Result};
use crate::model::{DiagnosisLabel, ImageInfo, Manifest};
use crate::parser::{parse_detection, parse_output, parse_segmentation, Payload};
use crate::task::TaskKind;

/// Raw model output for one record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub task: TaskKind,
    pub image_id: String,
    pub output: String,
}

/// Pair each record with a prediction. The k-th prediction for a
/// `(task, image_id)` answers the k-th record with that key; extra
/// predictions are ignored and missing ones are `None`.
pub fn align_predictions<'a>(
    records: &[TaskRecord],
    predictions: &'a [Prediction],
) -> Vec<Option<&'a str>> {
    let mut queues: HashMap<(TaskKind, &str), std::collections::VecDeque<&str>> = HashMap::new();
    for p in predictions {
        queues
            .entry((p.task, p.image_id.as_str()))
            .or_default()
            .push_back(&p.output);
    }
    records
        .iter()
        .map(|r| queues.get_mut(&(r.task, r.image_id.as_str()))?.pop_front())
        .collect()
}

fn per_class_accuracy(result: &ClassificationResult) -> Metric {
    let mut m = Metric::map();
    for (label, s) in &result.per_class {
        m = m.with(
            label,
            Metric::map()
                .with("precision", s.precision)
                .with("recall", s.recall)
                .with("support", s.support),
        );
    }
    m
}

fn accuracy_map(table: &BTreeMap<crate::dataset::QuestionCategory, Accuracy>) -> Metric {
    let mut m = Metric::map();
    for (cat, a) in table {
        m = m.with(
            cat.as_str(),
            Metric::map()
                .with("accuracy", a.accuracy)
                .with("correct", a.correct)
                .with("total", a.total),
        );
    }
    m
}

fn ap_metric(r: &APResult, images: usize) -> Metric {
    let mut per_class = Metric::map();
    for (label, c) in &r.per_class {
        per_class = per_class.with(
            label,
            Metric::map()
                .with("ap", c.ap)
                .with("gold", c.gold)
                .with("predicted", c.predicted)
                .with("true_positives", c.true_positives),
        );
    }
    Metric::map()
        .with("map", r.map)
        .with("recall", r.recall)
        .with("images", images)
        .with("per_class", per_class)
}

fn text_metric(prefix: &str, s: &TextScores, m: Metric) -> Metric {
    m.with(format!("{prefix}bleu4"), s.bleu4)
        .with(format!("{prefix}meteor"), s.meteor)
        .with(format!("{prefix}rouge_l"), s.rouge_l)
        .with(format!("{prefix}count"), s.count)
}

fn image<'a>(manifest: Option<&'a Manifest>, task: TaskKind, id: &str) -> Result<&'a ImageInfo> {
    let m = manifest
        .ok_or_else(|| Error::InvalidConfig(format!("{task} evaluation needs the manifest")))?;
    m.image(id).ok_or_else(|| Error::Unknown {
        kind: "image",
        value: id.to_string(),
    })
}

fn evaluate_diagnosis(records: &[TaskRecord], preds: &[Option<&str>]) -> Result<Metric> {
    let pairs: Vec<(&str, String)> = records
        .iter()
        .zip(preds)
        .map(|(r, p)| {
            let label = p
                .and_then(|p| p.trim().parse::<DiagnosisLabel>().ok())
                .map(|l| l.as_str().to_string())
                .unwrap_or_else(|| OTHER.to_string());
            (r.suffix.as_str(), label)
        })
        .collect();
    let labels: Vec<&str> = DiagnosisLabel::ALL.iter().map(|l| l.as_str()).collect();
    let r = classification_metrics(&pairs, &labels)?;
    Ok(Metric::map()
        .with("accuracy", r.accuracy)
        .with("macro_recall", r.macro_recall)
        .with("macro_precision", r.macro_precision)
        .with("count", r.total)
        .with("per_class", per_class_accuracy(&r)))
}

fn evaluate_report(records: &[TaskRecord], preds: &[Option<&str>]) -> Result<Metric> {
    let refs: Vec<&str> = records.iter().map(|r| r.suffix.as_str()).collect();
    let hyps: Vec<&str> = preds.iter().map(|p| p.map_or("", str::trim)).collect();
    let s = TextScores::compute(&refs, &hyps)?;
    Ok(text_metric("", &s, Metric::map()))
}

fn evaluate_vqa_metric(records: &[TaskRecord], preds: &[Option<&str>]) -> Result<Metric> {
    let r = evaluate_vqa(records, preds)?;
    let mut m = Metric::map()
        .with("closed_accuracy", r.closed.accuracy)
        .with("closed_total", r.closed.total)
        .with("per_category", accuracy_map(&r.per_category))
        .with("exact_match", accuracy_map(&r.exact_match));
    if let Some(open) = &r.open {
        m = text_metric("open_", open, m);
    }
    Ok(m)
}

fn gold_findings(manifest: &Manifest, image: &ImageInfo) -> Result<Vec<crate::dataset::Finding>> {
    manifest
        .annotations
        .iter()
        .filter(|a| a.image_id == image.image_id)
        .map(|a| prepare_finding(a, image))
        .collect()
}

fn evaluate_regions(
    task: TaskKind,
    records: &[TaskRecord],
    preds: &[Option<&str>],
    manifest: Option<&Manifest>,
) -> Result<Metric> {
    let mut boxes = Vec::with_capacity(records.len());
    let mut masks = Vec::with_capacity(records.len());
    for (r, p) in records.iter().zip(preds) {
        let info = image(manifest, task, &r.image_id)?;
        let gold = gold_findings(manifest.expect("checked by image()"), info)?;
        let raw = p.unwrap_or("");
        if task == TaskKind::Detection {
            boxes.push(ImageInstances {
                gold: gold
                    .iter()
                    .map(|f| Labeled::new(&f.pathology, f.bbox))
                    .collect(),
                predicted: parse_detection(raw, info)
                    .items
                    .into_iter()
                    .map(|d| Labeled::new(d.instance.label, d.bbox))
                    .collect(),
            });
        } else {
            masks.push(ImageInstances {
                gold: gold
                    .into_iter()
                    .map(|f| Labeled::new(f.pathology, f.mask))
                    .collect(),
                predicted: parse_segmentation(raw, info)
                    .items
                    .into_iter()
                    .map(|s| Labeled::new(s.instance.label, s.mask))
                    .collect(),
            });
        }
    }
    let result = if task == TaskKind::Detection {
        map_at_50(&boxes)
    } else {
        map_at_50(&masks)
    };
    Ok(ap_metric(&result, records.len()))
}

/// Evaluate every task present in `records`. Detection and segmentation gold
/// comes from the manifest geometry, so they need `manifest`.
pub fn evaluate(
    records: &[TaskRecord],
    predictions: &[Prediction],
    manifest: Option<&Manifest>,
) -> Result<EvalReport> {
    let mut by_task: BTreeMap<TaskKind, Vec<TaskRecord>> = BTreeMap::new();
    for r in records {
        by_task.entry(r.task).or_default().push(r.clone());
    }
    let mut report = EvalReport::default();
    for (task, recs) in by_task {
        let preds = align_predictions(&recs, predictions);
        let metric = match task {
            TaskKind::Diagnosis => evaluate_diagnosis(&recs, &preds)?,
            TaskKind::Report => evaluate_report(&recs, &preds)?,
            TaskKind::Vqa => evaluate_vqa_metric(&recs, &preds)?,
            TaskKind::Detection | TaskKind::Segmentation => {
                evaluate_regions(task, &recs, &preds, manifest)?
            }
        };
        report.tasks.insert(task, metric);
    }
    Ok(report)
}

/// Parse every prediction against its record's image, counting diagnostics.
pub fn count_parse_diagnostics(
    records: &[TaskRecord],
    predictions: &[Prediction],
    manifest: &Manifest,
) -> BTreeMap<TaskKind, usize> {
    let mut out = BTreeMap::new();
    let preds = align_predictions(records, predictions);
    for (r, p) in records.iter().zip(preds) {
        let Some(info) = manifest.image(&r.image_id) else {
            continue;
        };
        let parsed = parse_output(r.task, p.unwrap_or(""), info);
        let malformed = match parsed.payload {
            Payload::Diagnosis(None) => 1,
            _ => parsed.diagnostics.len(),
        };
        *out.entry(r.task).or_insert(0) += malformed;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RecordMeta;

    fn rec(task: TaskKind, id: &str, suffix: &str) -> TaskRecord {
        TaskRecord {
            task,
            image_id: id.into(),
            prefix: String::new(),
            suffix: suffix.into(),
            meta: RecordMeta::default(),
        }
    }

    fn pred(task: TaskKind, id: &str, output: &str) -> Prediction {
        Prediction {
            task,
            image_id: id.into(),
            output: output.into(),
        }
    }

    #[test]
    fn alignment_by_occurrence() {
        let recs = [
            rec(TaskKind::Vqa, "a", "1"),
            rec(TaskKind::Vqa, "b", "2"),
            rec(TaskKind::Vqa, "a", "3"),
        ];
        let preds = [
            pred(TaskKind::Vqa, "a", "x"),
            pred(TaskKind::Vqa, "a", "y"),
            pred(TaskKind::Diagnosis, "b", "z"),
        ];
        assert_eq!(
            align_predictions(&recs, &preds),
            [Some("x"), None, Some("y")]
        );
    }

    #[test]
    fn diagnosis_report_numbers() {
        let recs = [
            rec(TaskKind::Diagnosis, "a", "normal"),
            rec(TaskKind::Diagnosis, "b", "active TB"),
        ];
        let preds = [
            pred(TaskKind::Diagnosis, "a", "normal"),
            pred(TaskKind::Diagnosis, "b", "??"),
        ];
        let r = evaluate(&recs, &preds, None).unwrap();
        assert_eq!(r.get(TaskKind::Diagnosis, &["accuracy"]), Some(0.5));
        assert_eq!(r.get(TaskKind::Diagnosis, &["macro_precision"]), Some(0.5));
    }

    #[test]
    fn detection_needs_manifest() {
        let recs = [rec(TaskKind::Detection, "a", "")];
        assert!(matches!(
            evaluate(&recs, &[], None),
            Err(Error::InvalidConfig(_))
        ));
    }
}
