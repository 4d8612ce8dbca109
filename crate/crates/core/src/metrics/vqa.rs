//! Closed-question accuracy and open-answer text metrics.

use std::collections::BTreeMap;

use serde::Serialize;

use super::text::{bleu4, meteor_lite, rouge_l};
use crate::dataset::{AnswerType, QuestionCategory, TaskRecord};
use crate::error::Result;
use crate::parser::normalize_answer;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

impl Accuracy {
    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.correct += u64::from(hit);
        self.accuracy = self.correct as f64 / self.total as f64;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TextScores {
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub count: usize,
}

impl TextScores {
    pub fn compute<R: AsRef<str>, H: AsRef<str>>(
        references: &[R],
        hypotheses: &[H],
    ) -> Result<Self> {
        Ok(Self {
            bleu4: bleu4(references, hypotheses)?,
            meteor: meteor_lite(references, hypotheses)?,
            rouge_l: rouge_l(references, hypotheses)?,
            count: references.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VqaResult {
    /// Exact match after normalization over closed questions.
    pub closed: Accuracy,
    /// Closed-question accuracy per category.
    pub per_category: BTreeMap<QuestionCategory, Accuracy>,
    /// Normalized exact match over every question, per category.
    pub exact_match: BTreeMap<QuestionCategory, Accuracy>,
    /// Text metrics over open questions, absent when there are none.
    pub open: Option<TextScores>,
}

/// Score VQA records against aligned predictions. A missing prediction counts
/// as wrong for closed questions and as an empty answer for open ones.
pub fn evaluate_vqa<S: AsRef<str>>(
    records: &[TaskRecord],
    predictions: &[Option<S>],
) -> Result<VqaResult> {
    if records.len() != predictions.len() {
        return Err(crate::Error::LengthMismatch(
            records.len(),
            predictions.len(),
        ));
    }
    let mut closed = Accuracy::default();
    let mut per_category: BTreeMap<QuestionCategory, Accuracy> = BTreeMap::new();
    let mut exact_match: BTreeMap<QuestionCategory, Accuracy> = BTreeMap::new();
    let mut open_refs = Vec::new();
    let mut open_hyps = Vec::new();
    for (rec, pred) in records.iter().zip(predictions) {
        let pred = pred.as_ref().map(AsRef::as_ref);
        let hit = pred.is_some_and(|p| normalize_answer(p) == normalize_answer(&rec.suffix));
        if let Some(cat) = rec.meta.category {
            exact_match.entry(cat).or_default().add(hit);
        }
        match rec.meta.answer_type {
            Some(AnswerType::Closed) => {
                closed.add(hit);
                if let Some(cat) = rec.meta.category {
                    per_category.entry(cat).or_default().add(hit);
                }
            }
            _ => {
                open_refs.push(rec.suffix.as_str());
                open_hyps.push(pred.unwrap_or(""));
            }
        }
    }
    let open = if open_refs.is_empty() {
        None
    } else {
        Some(TextScores::compute(&open_refs, &open_hyps)?)
    };
    Ok(VqaResult {
        closed,
        per_category,
        exact_match,
        open,
    })
}
