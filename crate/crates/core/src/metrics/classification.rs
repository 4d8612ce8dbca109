//! Accuracy and macro precision/recall over a label set.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};

/// Column used for predictions outside the label set.
pub const OTHER: &str = "<other>";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    /// Gold instances of the class.
    pub support: u64,
    pub predicted: u64,
    pub correct: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationResult {
    pub accuracy: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub total: u64,
    pub correct: u64,
    pub per_class: BTreeMap<String, ClassStats>,
    /// `confusion[gold][predicted]`.
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Score `(gold, predicted)` pairs.
///
/// Classes are the label set plus any gold label outside it. Predictions that
/// name no class are tallied under [`OTHER`] and are always wrong. Macro means
/// run over classes with at least one gold instance.
pub fn classification_metrics<G, P, L>(
    pairs: &[(G, P)],
    labels: &[L],
) -> Result<ClassificationResult>
where
    G: AsRef<str>,
    P: AsRef<str>,
    L: AsRef<str>,
{
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut classes: BTreeSet<&str> = labels.iter().map(AsRef::as_ref).collect();
    classes.extend(pairs.iter().map(|(g, _)| g.as_ref()));

    let mut confusion: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut support: BTreeMap<&str, u64> = BTreeMap::new();
    let mut predicted: BTreeMap<&str, u64> = BTreeMap::new();
    let mut hits: BTreeMap<&str, u64> = BTreeMap::new();
    for (g, p) in pairs {
        let g = g.as_ref();
        let p = if classes.contains(p.as_ref()) {
            p.as_ref()
        } else {
            OTHER
        };
        *confusion
            .entry(g.to_string())
            .or_default()
            .entry(p.to_string())
            .or_insert(0) += 1;
        *support.entry(g).or_insert(0) += 1;
        *predicted.entry(p).or_insert(0) += 1;
        if g == p {
            *hits.entry(g).or_insert(0) += 1;
        }
    }

    let mut per_class = BTreeMap::new();
    for c in &classes {
        let s = support.get(c).copied().unwrap_or(0);
        let p = predicted.get(c).copied().unwrap_or(0);
        let h = hits.get(c).copied().unwrap_or(0);
        per_class.insert(
            c.to_string(),
            ClassStats {
                precision: ratio(h, p),
                recall: ratio(h, s),
                support: s,
                predicted: p,
                correct: h,
            },
        );
    }

    let present: Vec<&ClassStats> = per_class.values().filter(|s| s.support > 0).collect();
    let mean = |f: fn(&ClassStats) -> f64| {
        present.iter().map(|s| f(s)).sum::<f64>() / present.len() as f64
    };
    let correct: u64 = hits.values().sum();
    let total = pairs.len() as u64;
    Ok(ClassificationResult {
        accuracy: ratio(correct, total),
        macro_recall: mean(|s| s.recall),
        macro_precision: mean(|s| s.precision),
        total,
        correct,
        per_class,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_confusion_table() {
        let r = classification_metrics(&[("A", "A"), ("A", "B"), ("B", "B")], &["A", "B"]).unwrap();
        assert_eq!(r.accuracy, 2.0 / 3.0);
        assert_eq!(r.macro_recall, 0.75);
        assert_eq!(r.macro_precision, 0.75);
        assert_eq!(r.confusion["A"]["B"], 1);
    }

    #[test]
    fn absent_class_excluded_from_macro() {
        let r = classification_metrics(&[("A", "A"), ("B", "B")], &["A", "B", "C"]).unwrap();
        assert_eq!(
            (r.accuracy, r.macro_recall, r.macro_precision),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(r.per_class["C"].support, 0);
    }

    #[test]
    fn out_of_set_prediction_is_wrong() {
        let r = classification_metrics(&[("A", "zebra"), ("B", "B")], &["A", "B"]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.confusion["A"][OTHER], 1);
        assert_eq!(r.macro_recall, 0.5);
        assert_eq!(r.macro_precision, 0.5);
    }

    #[test]
    fn empty_is_error() {
        let none: [(&str, &str); 0] = [];
        assert!(classification_metrics(&none, &["A"]).is_err());
    }
}
