//! Image-level train/validation/test assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Manifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "split",
                value: s.to_string(),
            })
    }
}

/// Split weights train:validation:test.
pub const SPLIT_RATIO: [u64; 3] = [8, 1, 1];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub assignments: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, image_id: &str) -> Option<Split> {
        self.assignments.get(image_id).copied()
    }

    /// Image ids in `split`, sorted.
    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for s in self.assignments.values() {
            out[*s as usize] += 1;
        }
        out
    }
}

/// Largest-remainder apportionment of `total` items over integer `weights`.
/// Ties in the remainder go to the earlier weight.
pub fn apportion<W: Copy + Into<u128>>(total: u64, weights: &[W]) -> Vec<u64> {
    let weights: Vec<u128> = weights.iter().map(|&w| w.into()).collect();
    let sum: u128 = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let quota = |w: u128| u128::from(total) * w;
    let mut counts: Vec<u64> = weights.iter().map(|&w| (quota(w) / sum) as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(quota(weights[i]) % sum));
    for &i in order.iter().take((total - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Shuffle image ids with `seed` and cut them 8:1:1.
///
/// Ids are sorted before shuffling, so the result does not depend on manifest
/// order.
pub fn split_images(manifest: &Manifest, seed: u64) -> Result<SplitAssignment> {
    let n = manifest.images.len();
    if n < 10 {
        return Err(Error::TooFewImages { need: 10, got: n });
    }
    let mut ids: Vec<&str> = manifest
        .images
        .iter()
        .map(|i| i.image_id.as_str())
        .collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let sizes = apportion(n as u64, &SPLIT_RATIO);
    let mut assignments = BTreeMap::new();
    let mut it = ids.into_iter();
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        for id in it.by_ref().take(size as usize) {
            assignments.insert(id.to_string(), split);
        }
    }
    Ok(SplitAssignment { seed, assignments })
}
