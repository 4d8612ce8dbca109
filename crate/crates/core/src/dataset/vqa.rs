//! Template question/answer generation.

use rand::seq::IteratorRandom;

use super::report::{locate_zone, position_phrase};
use super::{AnswerType, PreparedImage, QuestionCategory, RecordMeta, TaskRecord};
use crate::rng;
use crate::task::TaskKind;

pub const ABNORMALITY_QUESTION: &str = "What abnormalities are seen in the X-ray image?";
pub const NO_ABNORMALITY: &str = "no abnormality";

pub fn presence_question(pathology: &str) -> String {
    format!("Is there {pathology} in the image?")
}

pub fn counting_question(pathology: &str) -> String {
    format!("How many instances of {pathology} are in the image?")
}

pub fn position_question(pathology: &str) -> String {
    format!("Where is the {pathology} located?")
}

fn record(
    image_id: &str,
    question: String,
    answer: String,
    category: QuestionCategory,
    answer_type: AnswerType,
) -> TaskRecord {
    TaskRecord {
        task: TaskKind::Vqa,
        image_id: image_id.to_string(),
        prefix: question,
        suffix: answer,
        meta: RecordMeta {
            category: Some(category),
            answer_type: Some(answer_type),
        },
    }
}

/// Questions for one image: one abnormality question, then presence,
/// counting and position per present pathology, then one negative presence
/// question for an absent vocabulary entry picked with `seed`.
pub(crate) fn questions_for(
    img: &PreparedImage,
    vocabulary: &[String],
    seed: u64,
) -> Vec<TaskRecord> {
    use AnswerType::*;
    use QuestionCategory::*;

    let id = img.info.image_id.as_str();
    let present = img.distinct_pathologies();
    let mut out = Vec::with_capacity(2 + 3 * present.len());

    let abnormality = if present.is_empty() {
        NO_ABNORMALITY.to_string()
    } else {
        present.join(", ")
    };
    out.push(record(
        id,
        ABNORMALITY_QUESTION.into(),
        abnormality,
        Abnormality,
        Open,
    ));

    for p in &present {
        let instances: Vec<_> = img.findings.iter().filter(|f| f.pathology == *p).collect();
        out.push(record(
            id,
            presence_question(p),
            "yes".into(),
            Presence,
            Closed,
        ));
        out.push(record(
            id,
            counting_question(p),
            instances.len().to_string(),
            Counting,
            Closed,
        ));
        let (zone, side) = locate_zone(&instances[0].bbox, &img.info);
        out.push(record(
            id,
            position_question(p),
            position_phrase(zone, side),
            Position,
            Open,
        ));
    }

    let mut rng = rng::keyed(seed, &["vqa-negative", id]);
    let absent = vocabulary
        .iter()
        .filter(|v| !present.contains(&v.as_str()))
        .choose(&mut rng);
    if let Some(absent) = absent {
        out.push(record(
            id,
            presence_question(absent),
            "no".into(),
            Presence,
            Closed,
        ));
    }
    out
}
