//! Shared generators and reference implementations for integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;

use cxrtasks::codec::{
    BoxTokens, Detection, LocToken, MaskTokens, SegToken, SegmentationInstance, SEG_TOKENS,
};
use cxrtasks::metrics::{ImageInstances, Labeled};
use cxrtasks::model::{BBox, BinaryMask};
use rand::Rng;

pub const LABELS: [&str; 6] = [
    "cavity",
    "consolidation",
    "pleural effusion",
    "nodule",
    "miliary pattern",
    "x",
];

pub fn random_box_tokens(rng: &mut impl Rng) -> BoxTokens {
    let y0 = rng.gen_range(0..999u16);
    let y1 = rng.gen_range(y0 + 1..=999);
    let x0 = rng.gen_range(0..999u16);
    let x1 = rng.gen_range(x0 + 1..=999);
    BoxTokens([y0, x0, y1, x1].map(|i| LocToken::new(i).unwrap()))
}

pub fn random_label(rng: &mut impl Rng) -> String {
    LABELS[rng.gen_range(0..LABELS.len())].to_string()
}

pub fn random_detection(rng: &mut impl Rng) -> Detection {
    Detection {
        loc: random_box_tokens(rng),
        label: random_label(rng),
    }
}

/// Segmentation instance whose decoded mask is never empty: one patch is all ones.
pub fn random_segmentation(rng: &mut impl Rng) -> SegmentationInstance {
    let mut seg: [SegToken; SEG_TOKENS] =
        std::array::from_fn(|_| SegToken::new(rng.gen_range(0..128)).unwrap());
    seg[rng.gen_range(0..SEG_TOKENS)] = SegToken::new(1).unwrap();
    SegmentationInstance {
        tokens: MaskTokens {
            loc: random_box_tokens(rng),
            seg,
        },
        label: random_label(rng),
    }
}

/// Blob mask: a few ellipses and rectangles plus salt noise.
pub fn random_mask(rng: &mut impl Rng, width: u32, height: u32) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    for _ in 0..rng.gen_range(1..=3) {
        let cy = rng.gen_range(0.0..f64::from(height));
        let cx = rng.gen_range(0.0..f64::from(width));
        let ry = rng.gen_range(0.5..f64::from(height) / 2.0 + 1.0);
        let rx = rng.gen_range(0.5..f64::from(width) / 2.0 + 1.0);
        let ellipse = rng.gen_bool(0.5);
        for r in 0..height {
            for c in 0..width {
                let dy = (f64::from(r) + 0.5 - cy) / ry;
                let dx = (f64::from(c) + 0.5 - cx) / rx;
                let inside = if ellipse {
                    dy * dy + dx * dx <= 1.0
                } else {
                    dy.abs() <= 1.0 && dx.abs() <= 1.0
                };
                if inside {
                    m.set(r, c, true);
                }
            }
        }
    }
    let noise = rng.gen_range(0..=(width * height / 50));
    for _ in 0..noise {
        let r = rng.gen_range(0..height);
        let c = rng.gen_range(0..width);
        let v = !m.get(r, c);
        m.set(r, c, v);
    }
    m
}

/// Integer-cornered box on a small grid, for exact pixel-count IoU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridBox {
    pub y0: u32,
    pub x0: u32,
    pub y1: u32,
    pub x1: u32,
}

impl GridBox {
    pub fn random(rng: &mut impl Rng, grid: u32) -> Self {
        let y0 = rng.gen_range(0..grid - 1);
        let x0 = rng.gen_range(0..grid - 1);
        let y1 = rng.gen_range(y0 + 1..=grid);
        let x1 = rng.gen_range(x0 + 1..=grid);
        Self { y0, x0, y1, x1 }
    }

    pub fn to_bbox(self) -> BBox {
        BBox::new(
            f64::from(self.y0),
            f64::from(self.x0),
            f64::from(self.y1),
            f64::from(self.x1),
        )
        .unwrap()
    }

    fn contains(self, r: u32, c: u32) -> bool {
        (self.y0..self.y1).contains(&r) && (self.x0..self.x1).contains(&c)
    }
}

/// `(intersection, union)` cell counts.
pub fn cell_overlap(a: GridBox, b: GridBox, grid: u32) -> (u64, u64) {
    let (mut inter, mut union) = (0, 0);
    for r in 0..grid {
        for c in 0..grid {
            let (x, y) = (a.contains(r, c), b.contains(r, c));
            inter += u64::from(x && y);
            union += u64::from(x || y);
        }
    }
    (inter, union)
}

#[derive(Clone, Debug)]
pub struct GridImage {
    pub gold: Vec<(usize, GridBox)>,
    pub predicted: Vec<(usize, GridBox)>,
}

pub fn random_grid_image(rng: &mut impl Rng, grid: u32, classes: usize) -> GridImage {
    let mut gold = Vec::new();
    for _ in 0..rng.gen_range(0..=4) {
        gold.push((rng.gen_range(0..classes), GridBox::random(rng, grid)));
    }
    let mut predicted = Vec::new();
    for _ in 0..rng.gen_range(0..=4) {
        // copy or perturb a gold box half the time to get frequent matches and ties
        let b = match gold.get(rng.gen_range(0..gold.len().max(1) * 2)) {
            Some(&(_, g)) if rng.gen_bool(0.5) => g,
            Some(&(_, g)) => GridBox {
                y1: (g.y1 + rng.gen_range(0..2)).min(grid),
                x1: (g.x1 + rng.gen_range(0..2)).min(grid),
                ..g
            },
            None => GridBox::random(rng, grid),
        };
        predicted.push((rng.gen_range(0..classes), b));
    }
    GridImage { gold, predicted }
}

pub fn to_instances(images: &[GridImage]) -> Vec<ImageInstances<BBox>> {
    let lab = |(c, b): &(usize, GridBox)| Labeled::new(format!("c{c}"), b.to_bbox());
    images
        .iter()
        .map(|im| ImageInstances {
            gold: im.gold.iter().map(lab).collect(),
            predicted: im.predicted.iter().map(lab).collect(),
        })
        .collect()
}

/// Compare two overlap ratios `i1/u1` and `i2/u2` exactly.
fn cmp_ratio((i1, u1): (u64, u64), (i2, u2): (u64, u64)) -> Ordering {
    (u128::from(i1) * u128::from(u2)).cmp(&(u128::from(i2) * u128::from(u1)))
}

/// Per-prediction preference key: matched, then larger IoU, then smaller gold index.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Choice {
    Miss,
    Hit { overlap: (u64, u64), gold: usize },
}

fn cmp_choice(a: &Choice, b: &Choice) -> Ordering {
    match (a, b) {
        (Choice::Miss, Choice::Miss) => Ordering::Equal,
        (Choice::Miss, _) => Ordering::Less,
        (_, Choice::Miss) => Ordering::Greater,
        (
            Choice::Hit {
                overlap: o1,
                gold: g1,
            },
            Choice::Hit {
                overlap: o2,
                gold: g2,
            },
        ) => cmp_ratio(*o1, *o2).then(g2.cmp(g1)),
    }
}

/// Every injective assignment of `preds` (in rank order) to eligible gold.
fn assignments(
    preds: &[GridBox],
    gold: &[(usize, GridBox)],
    grid: u32,
    used: &mut Vec<bool>,
    prefix: &mut Vec<Choice>,
    out: &mut Vec<Vec<Choice>>,
) {
    if prefix.len() == preds.len() {
        out.push(prefix.clone());
        return;
    }
    let p = preds[prefix.len()];
    prefix.push(Choice::Miss);
    assignments(preds, gold, grid, used, prefix, out);
    prefix.pop();
    for (j, &(_, g)) in gold.iter().enumerate() {
        if used[j] {
            continue;
        }
        let overlap = cell_overlap(p, g, grid);
        if 2 * overlap.0 <= overlap.1 {
            continue;
        }
        used[j] = true;
        prefix.push(Choice::Hit { overlap, gold: j });
        assignments(preds, gold, grid, used, prefix, out);
        prefix.pop();
        used[j] = false;
    }
}

/// Area under the interpolated precision-recall curve sampled at every
/// recall level `j / n`.
fn interpolated_ap(flags: &[bool], n: usize) -> f64 {
    let mut points = Vec::new();
    let mut tp = 0usize;
    for (k, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        points.push((tp, tp as f64 / (k + 1) as f64));
    }
    (1..=n)
        .map(|j| {
            points
                .iter()
                .filter(|(t, _)| *t >= j)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / n as f64
}

/// Exhaustive reference for mAP@0.5: for each class and image, enumerate all
/// matchings and keep the lexicographically best by rank-ordered preference.
pub fn brute_force_map(images: &[GridImage], grid: u32, classes: usize) -> f64 {
    let mut aps = Vec::new();
    for c in 0..classes {
        let n: usize = images
            .iter()
            .map(|im| im.gold.iter().filter(|g| g.0 == c).count())
            .sum();
        if n == 0 {
            continue;
        }
        // (rank within image, image index, hit)
        let mut ranked: Vec<(usize, usize, bool)> = Vec::new();
        for (i, im) in images.iter().enumerate() {
            let gold: Vec<(usize, GridBox)> =
                im.gold.iter().copied().filter(|g| g.0 == c).collect();
            let preds: Vec<(usize, GridBox)> = im
                .predicted
                .iter()
                .enumerate()
                .filter(|(_, p)| p.0 == c)
                .map(|(k, p)| (k, p.1))
                .collect();
            let boxes: Vec<GridBox> = preds.iter().map(|p| p.1).collect();
            let mut all = Vec::new();
            assignments(
                &boxes,
                &gold,
                grid,
                &mut vec![false; gold.len()],
                &mut Vec::new(),
                &mut all,
            );
            let best = all
                .into_iter()
                .max_by(|a, b| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| cmp_choice(x, y))
                        .find(|o| *o != Ordering::Equal)
                        .unwrap_or(Ordering::Equal)
                })
                .expect("the all-miss assignment always exists");
            for ((k, _), choice) in preds.iter().zip(best) {
                ranked.push((*k, i, choice != Choice::Miss));
            }
        }
        ranked.sort_by_key(|&(k, i, _)| (k, i));
        let flags: Vec<bool> = ranked.iter().map(|r| r.2).collect();
        aps.push(interpolated_ap(&flags, n));
    }
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}
