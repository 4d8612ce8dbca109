//! Derivation of the five task datasets from a manifest.
//!
//! Images are assigned to splits first, then every task's records inherit the
//! split of their image, so no image crosses splits in any task. Within a
//! split, records are ordered by image id and then annotation order.

mod report;
mod split;
mod vqa;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use report::{compose_report, locate_zone, position_phrase, Side, Zone};
pub use split::{apportion, split_images, Split, SplitAssignment, SPLIT_RATIO};
pub use vqa::{
    counting_question, position_question, presence_question, ABNORMALITY_QUESTION, NO_ABNORMALITY,
};

use crate::codec::{encode_box, encode_mask, render_suffix, Detection, SegmentationInstance};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{mask_to_bbox, BBox, BinaryMask, ImageInfo, Manifest, PathologyAnnotation};
use crate::task::TaskKind;

pub const DIAGNOSIS_PROMPT: &str = "What is the diagnosis in the X-ray image?";
pub const REPORT_PROMPT: &str = "Generate a medical report for the X-ray image provided.";
pub const PATHOLOGY_SEPARATOR: &str = " ; ";

pub fn detection_prompt<S: AsRef<str>>(pathologies: &[S]) -> String {
    let names: Vec<&str> = pathologies.iter().map(AsRef::as_ref).collect();
    format!("detect {}", names.join(PATHOLOGY_SEPARATOR))
}

pub fn segmentation_prompt<S: AsRef<str>>(pathologies: &[S]) -> String {
    let names: Vec<&str> = pathologies.iter().map(AsRef::as_ref).collect();
    format!("segment {}", names.join(PATHOLOGY_SEPARATOR))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionCategory {
    Abnormality,
    Presence,
    Position,
    Counting,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 4] = [
        QuestionCategory::Abnormality,
        QuestionCategory::Presence,
        QuestionCategory::Position,
        QuestionCategory::Counting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionCategory::Abnormality => "abnormality",
            QuestionCategory::Presence => "presence",
            QuestionCategory::Position => "position",
            QuestionCategory::Counting => "counting",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Open,
    Closed,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<QuestionCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_type: Option<AnswerType>,
}

/// One serialized example: prompt (`prefix`) and target (`suffix`) text for an image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: TaskKind,
    pub image_id: String,
    pub prefix: String,
    pub suffix: String,
    #[serde(default)]
    pub meta: RecordMeta,
}

impl TaskRecord {
    fn new(task: TaskKind, image_id: &str, prefix: String, suffix: String) -> Self {
        Self {
            task,
            image_id: image_id.to_string(),
            prefix,
            suffix,
            meta: RecordMeta::default(),
        }
    }

    pub fn is_closed_question(&self) -> bool {
        self.meta.answer_type == Some(AnswerType::Closed)
    }
}

/// Records of one task, per split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitRecords {
    by_split: [Vec<TaskRecord>; 3],
}

impl SplitRecords {
    pub fn get(&self, split: Split) -> &[TaskRecord] {
        &self.by_split[split as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Split, &[TaskRecord])> {
        Split::ALL
            .into_iter()
            .map(move |s| (s, self.by_split[s as usize].as_slice()))
    }

    pub fn len(&self) -> usize {
        self.by_split.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An annotation rasterized onto its image.
#[derive(Clone, Debug)]
pub struct Finding {
    pub pathology: String,
    pub mask: BinaryMask,
    pub bbox: BBox,
}

#[derive(Clone, Debug)]
pub struct PreparedImage {
    pub info: ImageInfo,
    pub split: Split,
    pub findings: Vec<Finding>,
}

impl PreparedImage {
    /// Pathologies in order of first appearance.
    pub fn distinct_pathologies(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for f in &self.findings {
            if !out.contains(&f.pathology.as_str()) {
                out.push(&f.pathology);
            }
        }
        out
    }
}

pub fn prepare_finding(ann: &PathologyAnnotation, image: &ImageInfo) -> Result<Finding> {
    let mask = ann.rasterize(image)?;
    let bbox = mask_to_bbox(&mask)?;
    Ok(Finding {
        pathology: ann.pathology.clone(),
        mask,
        bbox,
    })
}

/// Rasterize every annotation and attach each image's split, sorted by image id.
pub fn prepare(manifest: &Manifest, split: &SplitAssignment) -> Result<Vec<PreparedImage>> {
    let by_image = manifest.annotations_by_image();
    let mut out = Vec::with_capacity(manifest.images.len());
    for info in &manifest.images {
        let s = split
            .split_of(&info.image_id)
            .ok_or_else(|| Error::Unknown {
                kind: "image in split assignment",
                value: info.image_id.clone(),
            })?;
        let findings = by_image
            .get(info.image_id.as_str())
            .map(|anns| {
                anns.iter()
                    .map(|a| prepare_finding(a, info))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        out.push(PreparedImage {
            info: info.clone(),
            split: s,
            findings,
        });
    }
    out.sort_by(|a, b| a.info.image_id.cmp(&b.info.image_id));
    Ok(out)
}

fn collect<F>(images: &[PreparedImage], mut per_image: F) -> Result<SplitRecords>
where
    F: FnMut(&PreparedImage) -> Result<Vec<TaskRecord>>,
{
    let mut out = SplitRecords::default();
    for img in images {
        out.by_split[img.split as usize].extend(per_image(img)?);
    }
    Ok(out)
}

fn diagnosis_records(images: &[PreparedImage]) -> Result<SplitRecords> {
    collect(images, |img| {
        Ok(vec![TaskRecord::new(
            TaskKind::Diagnosis,
            &img.info.image_id,
            DIAGNOSIS_PROMPT.into(),
            img.info.diagnosis.as_str().into(),
        )])
    })
}

fn report_records(images: &[PreparedImage]) -> Result<SplitRecords> {
    collect(images, |img| {
        let findings: Vec<(&str, BBox)> = img
            .findings
            .iter()
            .map(|f| (f.pathology.as_str(), f.bbox))
            .collect();
        Ok(vec![TaskRecord::new(
            TaskKind::Report,
            &img.info.image_id,
            REPORT_PROMPT.into(),
            compose_report(&img.info, &findings),
        )])
    })
}

fn vqa_records(images: &[PreparedImage], vocabulary: &[String], seed: u64) -> Result<SplitRecords> {
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    collect(images, |img| Ok(vqa::questions_for(img, vocabulary, seed)))
}

fn detection_records(images: &[PreparedImage]) -> Result<SplitRecords> {
    collect(images, |img| {
        if img.findings.is_empty() {
            return Ok(vec![]);
        }
        let instances: Vec<Detection> = img
            .findings
            .iter()
            .map(|f| Detection {
                loc: encode_box(&f.bbox, &img.info),
                label: f.pathology.clone(),
            })
            .collect();
        Ok(vec![TaskRecord::new(
            TaskKind::Detection,
            &img.info.image_id,
            detection_prompt(&img.distinct_pathologies()),
            render_suffix(&instances)?,
        )])
    })
}

fn segmentation_records(images: &[PreparedImage], vocabulary: &[String]) -> Result<SplitRecords> {
    let prompt = segmentation_prompt(vocabulary);
    collect(images, |img| {
        if img.findings.is_empty() {
            return Ok(vec![]);
        }
        let instances = img
            .findings
            .iter()
            .map(|f| {
                Ok(SegmentationInstance {
                    tokens: encode_mask(&f.mask, &f.bbox, &img.info)?,
                    label: f.pathology.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(vec![TaskRecord::new(
            TaskKind::Segmentation,
            &img.info.image_id,
            prompt.clone(),
            render_suffix(&instances)?,
        )])
    })
}

/// One diagnosis record per image.
pub fn build_diagnosis(manifest: &Manifest, split: &SplitAssignment) -> Result<SplitRecords> {
    diagnosis_records(&prepare(manifest, split)?)
}

/// One templated report per image.
pub fn build_report(manifest: &Manifest, split: &SplitAssignment) -> Result<SplitRecords> {
    report_records(&prepare(manifest, split)?)
}

pub fn build_vqa(manifest: &Manifest, split: &SplitAssignment, seed: u64) -> Result<SplitRecords> {
    vqa_records(&prepare(manifest, split)?, &manifest.vocabulary, seed)
}

/// One record per annotated image; the prompt lists the pathologies present.
pub fn build_detection(manifest: &Manifest, split: &SplitAssignment) -> Result<SplitRecords> {
    detection_records(&prepare(manifest, split)?)
}

/// One record per annotated image; the prompt lists the whole vocabulary.
pub fn build_segmentation(manifest: &Manifest, split: &SplitAssignment) -> Result<SplitRecords> {
    segmentation_records(&prepare(manifest, split)?, &manifest.vocabulary)
}

/// All five task datasets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskDatasets {
    pub tasks: BTreeMap<TaskKind, SplitRecords>,
}

impl TaskDatasets {
    pub fn get(&self, task: TaskKind) -> Option<&SplitRecords> {
        self.tasks.get(&task)
    }

    /// Record counts per task for one split.
    pub fn sizes(&self, split: Split) -> BTreeMap<TaskKind, u64> {
        self.tasks
            .iter()
            .map(|(t, r)| (*t, r.get(split).len() as u64))
            .collect()
    }

    /// Write `{task}_{split}.jsonl` files into `dir`, returning the paths written.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut written = Vec::new();
        for (task, records) in &self.tasks {
            for (split, recs) in records.iter() {
                let path = dir.join(records_file_name(*task, split));
                io::write_jsonl(&path, recs)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

pub fn records_file_name(task: TaskKind, split: Split) -> String {
    format!("{task}_{split}.jsonl")
}

/// Build the requested tasks, rasterizing the manifest once.
pub fn build_tasks(
    manifest: &Manifest,
    split: &SplitAssignment,
    tasks: &[TaskKind],
    vqa_seed: u64,
) -> Result<TaskDatasets> {
    let images = prepare(manifest, split)?;
    let mut out = TaskDatasets::default();
    for &task in tasks {
        let records = match task {
            TaskKind::Diagnosis => diagnosis_records(&images)?,
            TaskKind::Detection => detection_records(&images)?,
            TaskKind::Report => report_records(&images)?,
            TaskKind::Vqa => vqa_records(&images, &manifest.vocabulary, vqa_seed)?,
            TaskKind::Segmentation => segmentation_records(&images, &manifest.vocabulary)?,
        };
        out.tasks.insert(task, records);
    }
    Ok(out)
}

pub fn build_all(
    manifest: &Manifest,
    split: &SplitAssignment,
    vqa_seed: u64,
) -> Result<TaskDatasets> {
    build_tasks(manifest, split, &TaskKind::ALL, vqa_seed)
}

/// Image ids seen in each split across every task, for leakage audits.
pub fn split_image_sets(
    datasets: &TaskDatasets,
) -> HashMap<Split, std::collections::BTreeSet<String>> {
    let mut out: HashMap<Split, std::collections::BTreeSet<String>> = HashMap::new();
    for records in datasets.tasks.values() {
        for (split, recs) in records.iter() {
            out.entry(split)
                .or_default()
                .extend(recs.iter().map(|r| r.image_id.clone()));
        }
    }
    out
}
