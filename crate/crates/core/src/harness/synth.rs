//! Synthetic manifests with rectangular, codec-friendly annotations.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::LOC_BINS;
use crate::model::{DiagnosisLabel, Geometry, ImageInfo, Manifest, PathologyAnnotation, Quality};

pub const SYNTH_VOCABULARY: [&str; 5] = [
    "consolidation",
    "cavity",
    "pleural effusion",
    "nodule",
    "fibrosis",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub images: usize,
    pub seed: u64,
    /// Image sides are drawn from this range; keep below 1000 so every pixel
    /// row and column has its own location bin.
    pub min_side: u32,
    pub max_side: u32,
    pub max_findings: usize,
    /// Smallest box side, in location bins.
    pub min_bins: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            images: 100,
            seed: 0,
            min_side: 320,
            max_side: 999,
            max_findings: 3,
            min_bins: 20,
        }
    }
}

/// Pixel span covering at least `min_bins` location bins.
fn span(rng: &mut ChaCha8Rng, dim: u32, min_bins: u32) -> (u32, u32) {
    let min_px = (min_bins * dim).div_ceil(u32::from(LOC_BINS)) + 1;
    let len = rng.gen_range(min_px..=(dim / 3).max(min_px));
    let start = rng.gen_range(0..=dim - len);
    (start, start + len)
}

fn overlaps(a: &[u32; 4], b: &[u32; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

/// A manifest of `images` images. Non-normal images carry 1..=`max_findings`
/// disjoint axis-aligned rectangles whose sides span at least `min_bins` bins.
pub fn synthetic_manifest(config: &SynthConfig) -> Manifest {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut images = Vec::with_capacity(config.images);
    let mut annotations = Vec::new();
    for i in 0..config.images {
        let width = rng.gen_range(config.min_side..=config.max_side);
        let height = rng.gen_range(config.min_side..=config.max_side);
        let diagnosis = *DiagnosisLabel::ALL.choose(&mut rng).expect("nonempty");
        let quality = *[Quality::Good, Quality::Average, Quality::Poor]
            .choose(&mut rng)
            .expect("nonempty");
        let info = ImageInfo {
            quality,
            ..ImageInfo::new(format!("synth{i:05}"), width, height, diagnosis)
        };
        if diagnosis != DiagnosisLabel::Normal {
            let wanted = rng.gen_range(1..=config.max_findings);
            let mut placed: Vec<[u32; 4]> = Vec::new();
            for _ in 0..wanted * 20 {
                if placed.len() == wanted {
                    break;
                }
                let (y0, y1) = span(&mut rng, height, config.min_bins);
                let (x0, x1) = span(&mut rng, width, config.min_bins);
                let r = [y0, x0, y1, x1];
                if placed.iter().any(|p| overlaps(p, &r)) {
                    continue;
                }
                placed.push(r);
                let pathology = SYNTH_VOCABULARY.choose(&mut rng).expect("nonempty");
                let (x0, y0, x1, y1) = (f64::from(x0), f64::from(y0), f64::from(x1), f64::from(y1));
                annotations.push(PathologyAnnotation {
                    image_id: info.image_id.clone(),
                    pathology: pathology.to_string(),
                    geometry: Geometry::Polygons(vec![vec![
                        [x0, y0],
                        [x1, y0],
                        [x1, y1],
                        [x0, y1],
                    ]]),
                });
            }
        }
        images.push(info);
    }
    Manifest {
        images,
        annotations,
        vocabulary: SYNTH_VOCABULARY.iter().map(|s| s.to_string()).collect(),
    }
}
