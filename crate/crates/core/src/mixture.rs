//! Inverse-size task weights and deterministic epoch schedules.
//!
//! Each task gets weight `max_size / size`, so the largest dataset has weight 1
//! and smaller datasets are oversampled. An epoch of `L` batches is divided
//! among tasks by largest-remainder apportionment, and the batches are
//! interleaved with smooth weighted round-robin so each task is spread evenly
//! over the epoch. Every batch holds records of a single task.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::apportion;
use crate::error::{Error, Result};
use crate::task::TaskKind;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixtureWeights {
    weights: BTreeMap<TaskKind, Ratio<u128>>,
}

impl MixtureWeights {
    pub fn get(&self, task: TaskKind) -> Option<Ratio<u128>> {
        self.weights.get(&task).copied()
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskKind> + '_ {
        self.weights.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaskKind, Ratio<u128>)> + '_ {
        self.weights.iter().map(|(t, w)| (*t, *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integer weights in task order, when every weight is a whole number.
    pub fn integer_ratio(&self) -> Option<Vec<u128>> {
        self.weights
            .values()
            .map(|w| w.is_integer().then(|| w.to_integer()))
            .collect()
    }

    /// Weights scaled by the common denominator, always integral.
    pub fn scaled(&self) -> Vec<u128> {
        let denom = self
            .weights
            .values()
            .fold(1u128, |acc, w| acc.lcm(w.denom()));
        self.weights
            .values()
            .map(|w| w.numer() * (denom / w.denom()))
            .collect()
    }

    pub fn from_integers(weights: &[(TaskKind, u128)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(t, w) in weights {
            if w == 0 {
                return Err(Error::InvalidConfig(format!("zero weight for {t}")));
            }
            map.insert(t, Ratio::from_integer(w));
        }
        Ok(Self { weights: map })
    }
}

impl fmt::Display for MixtureWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.weights.values().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(":"))
    }
}

/// Weights proportional to `1 / size`, normalized so the largest task has weight 1.
pub fn compute_weights(sizes: &BTreeMap<TaskKind, u64>) -> Result<MixtureWeights> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((t, _)) = sizes.iter().find(|(_, n)| **n == 0) {
        return Err(Error::ZeroSize(t.to_string()));
    }
    let largest = u128::from(*sizes.values().max().expect("nonempty"));
    let weights = sizes
        .iter()
        .map(|(t, n)| (*t, Ratio::new(largest, u128::from(*n))))
        .collect();
    Ok(MixtureWeights { weights })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub step: u64,
    pub task: TaskKind,
    pub record_ids: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixtureSchedule {
    pub entries: Vec<ScheduleEntry>,
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
}

impl MixtureSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<TaskKind, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.task).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug)]
struct TaskStream {
    task: TaskKind,
    batches: u64,
    order: Vec<u64>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl TaskStream {
    fn new(task: TaskKind, size: u64, batches: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(task.position() as u64);
        let mut order: Vec<u64> = (0..size).collect();
        order.shuffle(&mut rng);
        Self {
            task,
            batches,
            order,
            pos: 0,
            rng,
        }
    }

    fn draw(&mut self, n: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Stateful schedule generator. Record shuffles continue across epochs, so
/// successive epochs walk through each task's records before repeating any.
#[derive(Debug)]
pub struct MixtureSampler {
    streams: Vec<TaskStream>,
    batch_size: usize,
    epoch_batches: u64,
    seed: u64,
    epoch: u64,
}

impl MixtureSampler {
    pub fn new(
        weights: &MixtureWeights,
        sizes: &BTreeMap<TaskKind, u64>,
        batch_size: usize,
        epoch_batches: u64,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::ZeroBatchSize);
        }
        if (epoch_batches as usize) < weights.len() {
            return Err(Error::ScheduleTooShort {
                batches: epoch_batches as usize,
                tasks: weights.len(),
            });
        }
        let counts = apportion(epoch_batches, &weights.scaled());
        let streams = weights
            .tasks()
            .zip(counts)
            .map(|(task, batches)| {
                let size = *sizes.get(&task).ok_or_else(|| Error::Unknown {
                    kind: "dataset size for task",
                    value: task.to_string(),
                })?;
                if size == 0 {
                    return Err(Error::ZeroSize(task.to_string()));
                }
                Ok(TaskStream::new(task, size, batches, seed))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            streams,
            batch_size,
            epoch_batches,
            seed,
            epoch: 0,
        })
    }

    /// Batches per epoch for each task.
    pub fn batch_counts(&self) -> BTreeMap<TaskKind, u64> {
        self.streams.iter().map(|s| (s.task, s.batches)).collect()
    }

    pub fn next_epoch(&mut self) -> MixtureSchedule {
        let total = i128::from(self.epoch_batches as i64);
        let mut credit = vec![0i128; self.streams.len()];
        let mut entries = Vec::with_capacity(self.epoch_batches as usize);
        for step in 0..self.epoch_batches {
            let mut pick = None::<usize>;
            for (i, s) in self.streams.iter().enumerate() {
                if s.batches == 0 {
                    continue;
                }
                credit[i] += i128::from(s.batches as i64);
                if pick.is_none_or(|p| credit[i] > credit[p]) {
                    pick = Some(i);
                }
            }
            let i = pick.expect("at least one task has batches");
            credit[i] -= total;
            let stream = &mut self.streams[i];
            entries.push(ScheduleEntry {
                step,
                task: stream.task,
                record_ids: stream.draw(self.batch_size),
            });
        }
        let schedule = MixtureSchedule {
            entries,
            batch_size: self.batch_size,
            seed: self.seed,
            epoch: self.epoch,
        };
        self.epoch += 1;
        schedule
    }
}

/// Schedule for a single epoch.
pub fn build_schedule(
    weights: &MixtureWeights,
    sizes: &BTreeMap<TaskKind, u64>,
    batch_size: usize,
    epoch_batches: u64,
    seed: u64,
) -> Result<MixtureSchedule> {
    Ok(MixtureSampler::new(weights, sizes, batch_size, epoch_batches, seed)?.next_epoch())
}
