//! Per-class average precision at IoU > 0.5.
//!
//! Generated outputs carry no confidence scores, so emission order is the
//! ranking: within an image earlier instances rank higher, and across images
//! predictions of equal rank are ordered by image position in the input.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{box_iou, mask_iou, BBox, BinaryMask};

pub const IOU_THRESHOLD: f64 = 0.5;

/// A region type with an intersection-over-union.
pub trait Region {
    fn iou(&self, other: &Self) -> f64;
}

impl Region for BBox {
    fn iou(&self, other: &Self) -> f64 {
        box_iou(self, other)
    }
}

impl Region for BinaryMask {
    /// Masks of different sizes never overlap.
    fn iou(&self, other: &Self) -> f64 {
        mask_iou(self, other).unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labeled<G> {
    pub label: String,
    pub region: G,
}

impl<G> Labeled<G> {
    pub fn new(label: impl Into<String>, region: G) -> Self {
        Self {
            label: label.into(),
            region,
        }
    }
}

/// Gold instances and ranked predictions for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageInstances<G> {
    pub gold: Vec<Labeled<G>>,
    pub predicted: Vec<Labeled<G>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PRPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassAP {
    pub ap: f64,
    pub gold: usize,
    pub predicted: usize,
    pub true_positives: usize,
    /// TP flag of each class prediction in global rank order.
    pub ranked_tp: Vec<bool>,
    pub curve: Vec<PRPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct APResult {
    pub map: f64,
    /// Matched gold instances over all gold instances.
    pub recall: f64,
    pub per_class: BTreeMap<String, ClassAP>,
}

/// All-point interpolated AP from TP flags in rank order.
pub fn average_precision(ranked_tp: &[bool], num_gold: usize) -> (f64, Vec<PRPoint>) {
    let mut curve = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in ranked_tp.iter().enumerate() {
        tp += usize::from(hit);
        curve.push(PRPoint {
            recall: tp as f64 / num_gold as f64,
            precision: tp as f64 / (k + 1) as f64,
        });
    }
    let mut envelope = 0.0f64;
    let mut sum = 0.0;
    for (k, p) in curve.iter().enumerate().rev() {
        envelope = envelope.max(p.precision);
        if ranked_tp[k] {
            sum += envelope;
        }
    }
    (sum / num_gold as f64, curve)
}

/// mAP over classes that have gold instances. Zero when there are none.
pub fn map_at_50<G: Region>(images: &[ImageInstances<G>]) -> APResult {
    let mut gold_count: BTreeMap<&str, usize> = BTreeMap::new();
    for img in images {
        for g in &img.gold {
            *gold_count.entry(&g.label).or_insert(0) += 1;
        }
    }

    // (rank, image, prediction index)
    let mut order: Vec<(usize, usize, usize)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, img)| (0..img.predicted.len()).map(move |k| (k, i, k)))
        .collect();
    order.sort_unstable();

    let mut matched: Vec<Vec<bool>> = images
        .iter()
        .map(|img| vec![false; img.gold.len()])
        .collect();
    let mut flags: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for (_, i, k) in order {
        let pred = &images[i].predicted[k];
        if !gold_count.contains_key(pred.label.as_str()) {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in images[i].gold.iter().enumerate() {
            if matched[i][j] || g.label != pred.label {
                continue;
            }
            let iou = pred.region.iou(&g.region);
            if iou > IOU_THRESHOLD && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            matched[i][j] = true;
        }
        flags.entry(&pred.label).or_default().push(best.is_some());
    }

    let mut per_class = BTreeMap::new();
    let mut tp_total = 0;
    for (&label, &n) in &gold_count {
        let ranked_tp = flags.remove(label).unwrap_or_default();
        let (ap, curve) = average_precision(&ranked_tp, n);
        let tp = ranked_tp.iter().filter(|&&t| t).count();
        tp_total += tp;
        per_class.insert(
            label.to_string(),
            ClassAP {
                ap,
                gold: n,
                predicted: ranked_tp.len(),
                true_positives: tp,
                ranked_tp,
                curve,
            },
        );
    }
    let gold_total: usize = gold_count.values().sum();
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
    };
    APResult {
        map,
        recall: if gold_total == 0 {
            0.0
        } else {
            tp_total as f64 / gold_total as f64
        },
        per_class,
    }
}
