//! Domain types for images, geometry, masks, annotations and the dataset
//! manifest, plus polygon/RLE rasterization and box extraction.
//!
//! Coordinates use a top-left origin. Boxes are `(y_min, x_min, y_max, x_max)`
//! with exclusive max edges; masks are stored row-major.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Good,
    Average,
    Poor,
}

/// TB diagnosis class of a whole image.
///
/// The manifest uses the snake-case key (`active_tb`); generated text uses
/// the display form (`active TB`). Both parse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisLabel {
    #[serde(alias = "active TB")]
    ActiveTb,
    #[serde(alias = "inactive TB")]
    InactiveTb,
    Normal,
    #[serde(alias = "sick but no TB")]
    SickButNoTb,
}

impl DiagnosisLabel {
    pub const ALL: [DiagnosisLabel; 4] = [
        DiagnosisLabel::ActiveTb,
        DiagnosisLabel::InactiveTb,
        DiagnosisLabel::Normal,
        DiagnosisLabel::SickButNoTb,
    ];

    /// Text used in prompts' targets and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisLabel::ActiveTb => "active TB",
            DiagnosisLabel::InactiveTb => "inactive TB",
            DiagnosisLabel::Normal => "normal",
            DiagnosisLabel::SickButNoTb => "sick but no TB",
        }
    }

    /// Key used in manifest files.
    pub fn key(self) -> &'static str {
        match self {
            DiagnosisLabel::ActiveTb => "active_tb",
            DiagnosisLabel::InactiveTb => "inactive_tb",
            DiagnosisLabel::Normal => "normal",
            DiagnosisLabel::SickButNoTb => "sick_but_no_tb",
        }
    }
}

impl fmt::Display for DiagnosisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagnosisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s || l.key() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "diagnosis",
                value: s.to_string(),
            })
    }
}

fn default_channels() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    #[serde(rename = "id")]
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_channels")]
    pub channels: u32,
    pub quality: Quality,
    pub diagnosis: DiagnosisLabel,
}

impl ImageInfo {
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        diagnosis: DiagnosisLabel,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            width,
            height,
            channels: 3,
            quality: Quality::Good,
            diagnosis,
        }
    }
}

/// Axis-aligned box in pixel space, max edges exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub y_min: f64,
    pub x_min: f64,
    pub y_max: f64,
    pub x_max: f64,
}

impl BBox {
    pub fn new(y_min: f64, x_min: f64, y_max: f64, x_max: f64) -> Result<Self> {
        let b = Self {
            y_min,
            x_min,
            y_max,
            x_max,
        };
        if ![y_min, x_min, y_max, x_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinate in {b:?}")));
        }
        if y_min >= y_max || x_min >= x_max {
            return Err(Error::InvalidBox(format!("non-positive area {b:?}")));
        }
        Ok(b)
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn area(&self) -> f64 {
        self.height() * self.width()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.y_min + self.y_max) / 2.0,
            (self.x_min + self.x_max) / 2.0,
        )
    }

    pub fn is_within(&self, image: &ImageInfo) -> bool {
        self.y_min >= 0.0
            && self.x_min >= 0.0
            && self.y_max <= f64::from(image.height)
            && self.x_max <= f64::from(image.width)
    }
}

/// Row-major binary grid.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count_ones())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(Error::LengthMismatch(bits.len(), expected));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Mask with the pixel rectangle `[row0, row1) x [col0, col1)` set.
    pub fn from_rect(width: u32, height: u32, row0: u32, col0: u32, row1: u32, col1: u32) -> Self {
        let mut m = Self::new(width, height);
        for r in row0..row1.min(height) {
            for c in col0..col1.min(width) {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let w = self.width as usize;
        self.bits[row as usize * w + col as usize] = value;
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.check_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// Column-major run lengths starting with a zero run (COCO convention).
    pub fn to_rle(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u64;
        for c in 0..self.width {
            for r in 0..self.height {
                let v = self.get(r, c);
                if v != current {
                    runs.push(len);
                    len = 0;
                    current = v;
                }
                len += 1;
            }
        }
        runs.push(len);
        runs
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

/// Annotation geometry as found in a manifest.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// One or more rings of `[x, y]` vertices; the union of their fills.
    Polygons(Vec<Vec<[f64; 2]>>),
    /// Column-major run lengths, first run counts zeros.
    Rle(Vec<u64>),
    Mask(BinaryMask),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnnotationDoc", into = "AnnotationDoc")]
pub struct PathologyAnnotation {
    pub image_id: String,
    pub pathology: String,
    pub geometry: Geometry,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PolygonField {
    Single(Vec<[f64; 2]>),
    Multi(Vec<Vec<[f64; 2]>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AnnotationDoc {
    image_id: String,
    pathology: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polygon: Option<PolygonField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rle: Option<Vec<u64>>,
}

impl TryFrom<AnnotationDoc> for PathologyAnnotation {
    type Error = String;

    fn try_from(doc: AnnotationDoc) -> std::result::Result<Self, String> {
        let geometry = match (doc.polygon, doc.rle) {
            (Some(PolygonField::Single(ring)), None) => Geometry::Polygons(vec![ring]),
            (Some(PolygonField::Multi(rings)), None) => Geometry::Polygons(rings),
            (None, Some(runs)) => Geometry::Rle(runs),
            (Some(_), Some(_)) => {
                return Err(format!(
                    "annotation on {} has both \"polygon\" and \"rle\"",
                    doc.image_id
                ))
            }
            (None, None) => {
                return Err(format!(
                    "annotation on {} needs \"polygon\" or \"rle\"",
                    doc.image_id
                ))
            }
        };
        Ok(Self {
            image_id: doc.image_id,
            pathology: doc.pathology,
            geometry,
        })
    }
}

impl From<PathologyAnnotation> for AnnotationDoc {
    fn from(a: PathologyAnnotation) -> Self {
        let (polygon, rle) = match a.geometry {
            Geometry::Polygons(mut rings) if rings.len() == 1 => {
                (Some(PolygonField::Single(rings.remove(0))), None)
            }
            Geometry::Polygons(rings) => (Some(PolygonField::Multi(rings)), None),
            Geometry::Rle(runs) => (None, Some(runs)),
            Geometry::Mask(m) => (None, Some(m.to_rle())),
        };
        Self {
            image_id: a.image_id,
            pathology: a.pathology,
            polygon,
            rle,
        }
    }
}

impl PathologyAnnotation {
    pub fn rasterize(&self, image: &ImageInfo) -> Result<BinaryMask> {
        rasterize(&self.geometry, image.width, image.height)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub images: Vec<ImageInfo>,
    #[serde(default)]
    pub annotations: Vec<PathologyAnnotation>,
    #[serde(default)]
    pub vocabulary: Vec<String>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("manifest", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    pub fn image_index(&self) -> HashMap<&str, &ImageInfo> {
        self.images
            .iter()
            .map(|i| (i.image_id.as_str(), i))
            .collect()
    }

    /// Annotations grouped per image, each group in manifest order.
    pub fn annotations_by_image(&self) -> HashMap<&str, Vec<&PathologyAnnotation>> {
        let mut out: HashMap<&str, Vec<&PathologyAnnotation>> = HashMap::new();
        for a in &self.annotations {
            out.entry(a.image_id.as_str()).or_default().push(a);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    DanglingAnnotation,
    ZeroDimension,
    UnknownPathology,
    InvalidLabel,
    DuplicateVocabulary,
    InvalidGeometry,
    EmptyMask,
    /// Geometry cannot be represented by location/segmentation tokens.
    Unencodable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.image_id {
            Some(id) => write!(f, "[{id}] {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn violation(kind: ViolationKind, image_id: Option<&str>, message: String) -> Violation {
    Violation {
        kind,
        image_id: image_id.map(str::to_string),
        message,
    }
}

/// Labels end up between token groups and `;` separators, so they must
/// survive a render/parse round trip.
pub(crate) fn label_is_renderable(label: &str) -> bool {
    !label.is_empty()
        && label.trim() == label
        && !label.contains([';', '<', '>', '\n', '\r'])
        && !label.split(' ').any(str::is_empty)
}

/// Check every manifest invariant and return one violation per breach.
pub fn validate_manifest(manifest: &Manifest) -> Vec<Violation> {
    use ViolationKind::*;

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for img in &manifest.images {
        if !seen.insert(img.image_id.as_str()) {
            out.push(violation(
                DuplicateId,
                Some(&img.image_id),
                format!("duplicate id {:?}", img.image_id),
            ));
        }
        if img.width == 0 || img.height == 0 {
            out.push(violation(
                ZeroDimension,
                Some(&img.image_id),
                format!(
                    "image size {}x{} must be at least 1x1",
                    img.width, img.height
                ),
            ));
        }
    }

    let mut vocab = HashSet::new();
    for label in &manifest.vocabulary {
        if !vocab.insert(label.as_str()) {
            out.push(violation(
                DuplicateVocabulary,
                None,
                format!("pathology {label:?} listed twice in vocabulary"),
            ));
        }
        if !label_is_renderable(label) {
            out.push(violation(
                InvalidLabel,
                None,
                format!("pathology {label:?} cannot appear in token text"),
            ));
        }
    }

    let images = manifest.image_index();
    for (idx, ann) in manifest.annotations.iter().enumerate() {
        let id = Some(ann.image_id.as_str());
        if !vocab.contains(ann.pathology.as_str()) {
            out.push(violation(
                UnknownPathology,
                id,
                format!(
                    "annotation {idx}: pathology {:?} not in vocabulary",
                    ann.pathology
                ),
            ));
        }
        let Some(img) = images.get(ann.image_id.as_str()) else {
            out.push(violation(
                DanglingAnnotation,
                id,
                format!("annotation {idx}: dangling annotation, unknown image"),
            ));
            continue;
        };
        if img.width == 0 || img.height == 0 {
            continue;
        }
        let mask = match ann.rasterize(img) {
            Ok(m) => m,
            Err(e) => {
                out.push(violation(
                    InvalidGeometry,
                    id,
                    format!("annotation {idx}: {e}"),
                ));
                continue;
            }
        };
        let bbox = match mask_to_bbox(&mask) {
            Ok(b) => b,
            Err(_) => {
                out.push(violation(
                    EmptyMask,
                    id,
                    format!("annotation {idx}: empty mask"),
                ));
                continue;
            }
        };
        if let Err(e) = codec::check_encodable(&mask, &bbox, img) {
            out.push(violation(Unencodable, id, format!("annotation {idx}: {e}")));
        }
    }
    out
}

/// Rasterize a geometry onto a `width x height` grid.
///
/// Polygons are filled with the even-odd rule sampled at pixel centers; several
/// rings are unioned. RLE runs are decoded column-major.
pub fn rasterize(geometry: &Geometry, width: u32, height: u32) -> Result<BinaryMask> {
    match geometry {
        Geometry::Polygons(rings) => {
            if rings.is_empty() {
                return Err(Error::DegeneratePolygon(0));
            }
            let mut mask = BinaryMask::new(width, height);
            for ring in rings {
                fill_polygon(&mut mask, ring)?;
            }
            Ok(mask)
        }
        Geometry::Rle(runs) => decode_rle(runs, width, height),
        Geometry::Mask(m) => {
            if m.width != width || m.height != height {
                return Err(Error::DimensionMismatch(m.width, m.height, width, height));
            }
            Ok(m.clone())
        }
    }
}

fn fill_polygon(mask: &mut BinaryMask, ring: &[[f64; 2]]) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::DegeneratePolygon(ring.len()));
    }
    let (w, h) = (f64::from(mask.width), f64::from(mask.height));
    for &[x, y] in ring {
        if !(x.is_finite() && y.is_finite() && (0.0..=w).contains(&x) && (0.0..=h).contains(&y)) {
            return Err(Error::VertexOutOfBounds {
                x,
                y,
                width: mask.width,
                height: mask.height,
            });
        }
    }

    let mut crossings = Vec::new();
    for row in 0..mask.height {
        let yc = f64::from(row) + 0.5;
        crossings.clear();
        for (i, &[x1, y1]) in ring.iter().enumerate() {
            let [x2, y2] = ring[(i + 1) % ring.len()];
            if (y1 > yc) != (y2 > yc) {
                crossings.push(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(f64::total_cmp);
        // A center is inside when an odd number of crossings lie strictly to
        // its right, i.e. it falls in [c[2k], c[2k+1]).
        for pair in crossings.chunks_exact(2) {
            let start = (pair[0] - 0.5).ceil().max(0.0);
            let end = (pair[1] - 0.5).ceil().min(w);
            let mut col = start;
            while col < end {
                mask.set(row, col as u32, true);
                col += 1.0;
            }
        }
    }
    Ok(())
}

fn decode_rle(runs: &[u64], width: u32, height: u32) -> Result<BinaryMask> {
    let expected = u64::from(width) * u64::from(height);
    let got = runs.iter().fold(0u64, |acc, &r| acc.saturating_add(r));
    if got != expected {
        return Err(Error::RleLength { expected, got });
    }
    let mut mask = BinaryMask::new(width, height);
    let mut idx = 0u64;
    for (i, &run) in runs.iter().enumerate() {
        if i % 2 == 1 {
            for k in idx..idx + run {
                let col = (k / u64::from(height)) as u32;
                let row = (k % u64::from(height)) as u32;
                mask.set(row, col, true);
            }
        }
        idx += run;
    }
    Ok(mask)
}

/// Tightest box around the set bits, max edges exclusive.
pub fn mask_to_bbox(mask: &BinaryMask) -> Result<BBox> {
    let (mut r0, mut c0, mut r1, mut c1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    let mut any = false;
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.get(r, c) {
                any = true;
                r0 = r0.min(r);
                c0 = c0.min(c);
                r1 = r1.max(r + 1);
                c1 = c1.max(c + 1);
            }
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    BBox::new(f64::from(r0), f64::from(c0), f64::from(r1), f64::from(c1))
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let inter = ih * iw;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_dims(b)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += u64::from(x && y);
        union += u64::from(x || y);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}
