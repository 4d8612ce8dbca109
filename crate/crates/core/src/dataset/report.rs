//! Templated findings/impression reports and lung zone lookup.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{BBox, DiagnosisLabel, ImageInfo};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Upper,
    Middle,
    Lower,
}

/// Patient side. The image's left half shows the patient's right lung.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zone::Upper => "upper",
            Zone::Middle => "middle",
            Zone::Lower => "lower",
        })
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Right => "right",
            Side::Left => "left",
        })
    }
}

/// Zone and side of the box centroid. Vertical thirds and horizontal halves
/// are half-open, so a centroid exactly on `H/3` is `Middle`.
pub fn locate_zone(b: &BBox, image: &ImageInfo) -> (Zone, Side) {
    let (cy, cx) = b.center();
    let (h, w) = (f64::from(image.height), f64::from(image.width));
    let zone = if 3.0 * cy < h {
        Zone::Upper
    } else if 3.0 * cy < 2.0 * h {
        Zone::Middle
    } else {
        Zone::Lower
    };
    let side = if 2.0 * cx < w {
        Side::Right
    } else {
        Side::Left
    };
    (zone, side)
}

/// `"{zone} zone of the {side} lung"`.
pub fn position_phrase(zone: Zone, side: Side) -> String {
    format!("{zone} zone of the {side} lung")
}

/// Compose the report for one image from its `(pathology, box)` findings in
/// annotation order.
pub fn compose_report(image: &ImageInfo, findings: &[(&str, BBox)]) -> String {
    let body = if image.diagnosis == DiagnosisLabel::Normal || findings.is_empty() {
        "no findings.".to_string()
    } else {
        findings
            .iter()
            .map(|(pathology, b)| {
                let (zone, side) = locate_zone(b, image);
                format!(
                    "There is {pathology} in the {}.",
                    position_phrase(zone, side)
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!("Findings: {body} Impression: {}.", image.diagnosis)
}
