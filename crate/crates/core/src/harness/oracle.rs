//! Stand-in predictor that replays gold suffixes, optionally corrupted.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{LocToken, INSTANCE_SEPARATOR, LOC_BINS};
use crate::dataset::TaskRecord;
use crate::error::{Error, Result};
use crate::model::DiagnosisLabel;
use crate::rng;
use crate::task::TaskKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    #[default]
    Perfect,
    Corrupted,
}

impl std::str::FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(OracleMode::Perfect),
            "corrupted" => Ok(OracleMode::Corrupted),
            _ => Err(Error::Unknown {
                kind: "oracle mode",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub mode: OracleMode,
    #[serde(default)]
    pub drop_prob: f64,
    /// Maximum absolute change applied to each location token index.
    #[serde(default)]
    pub jitter_bins: u16,
    #[serde(default)]
    pub garble_prob: f64,
    #[serde(default)]
    pub answer_flip_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl OracleConfig {
    pub fn perfect() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("drop_prob", self.drop_prob),
            ("garble_prob", self.garble_prob),
            ("answer_flip_prob", self.answer_flip_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {p} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Uniform draws for one instance, taken before any probability is consulted
/// so that raising one knob never reshuffles the others.
struct Draws {
    drop: f64,
    garble: f64,
    flip: f64,
    jitter: [i64; 4],
    rng: rand_chacha::ChaCha8Rng,
}

fn draws(config: &OracleConfig, record: &TaskRecord, instance: usize) -> Draws {
    let index = instance.to_string();
    let mut rng = rng::keyed(
        config.seed,
        &[
            "oracle",
            record.task.as_str(),
            &record.image_id,
            &record.prefix,
            &index,
        ],
    );
    let j = i64::from(config.jitter_bins);
    Draws {
        drop: rng.gen(),
        garble: rng.gen(),
        flip: rng.gen(),
        jitter: std::array::from_fn(|_| rng.gen_range(-j..=j)),
        rng,
    }
}

/// Shift every `<locNNNN>` index by the next jitter offset, clamped to the bin range.
fn jitter_locs(segment: &str, offsets: &[i64; 4]) -> String {
    let mut out = String::with_capacity(segment.len());
    let mut rest = segment;
    let mut k = 0;
    while let Some(at) = rest.find("<loc") {
        out.push_str(&rest[..at]);
        let tail = &rest[at..];
        let parsed = tail
            .get(4..8)
            .filter(|d| d.bytes().all(|b| b.is_ascii_digit()) && tail.get(8..9) == Some(">"))
            .and_then(|d| d.parse::<i64>().ok());
        match parsed {
            Some(idx) => {
                let shifted = (idx + offsets[k % 4]).clamp(0, i64::from(LOC_BINS) - 1);
                out.push_str(&LocToken::saturating(shifted).to_string());
                k += 1;
                rest = &tail[9..];
            }
            None => {
                out.push_str("<loc");
                rest = &tail[4..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Drop the final token so the segment no longer parses.
fn garble(segment: &str) -> String {
    match segment.find('>') {
        Some(i) => format!("{}{}", &segment[..i], &segment[i + 1..]),
        None => format!("<{segment}"),
    }
}

fn flip_closed(answer: &str, rng: &mut impl Rng) -> String {
    match answer {
        "yes" => "no".into(),
        "no" => "yes".into(),
        _ => match answer.parse::<u64>() {
            Ok(n) => (n + rng.gen_range(1..=2)).to_string(),
            Err(_) => format!("not {answer}"),
        },
    }
}

fn flip_diagnosis(answer: &str, rng: &mut impl Rng) -> String {
    let others: Vec<DiagnosisLabel> = DiagnosisLabel::ALL
        .into_iter()
        .filter(|l| l.as_str() != answer)
        .collect();
    others[rng.gen_range(0..others.len())].as_str().to_string()
}

fn corrupt_instances(record: &TaskRecord, config: &OracleConfig) -> String {
    if record.suffix.is_empty() {
        return String::new();
    }
    let mut kept = Vec::new();
    for (i, segment) in record.suffix.split(INSTANCE_SEPARATOR).enumerate() {
        let d = draws(config, record, i);
        if d.drop < config.drop_prob {
            continue;
        }
        let mut s = segment.to_string();
        if config.jitter_bins > 0 {
            s = jitter_locs(&s, &d.jitter);
        }
        if d.garble < config.garble_prob {
            s = garble(&s);
        }
        kept.push(s);
    }
    kept.join(INSTANCE_SEPARATOR)
}

/// Output the model stand-in would produce for `record`.
///
/// Perfect mode returns the suffix. Corrupted mode draws per-instance
/// randomness keyed on the seed, task, image id, prompt and instance index.
pub fn oracle_predict(record: &TaskRecord, config: &OracleConfig) -> String {
    if config.mode == OracleMode::Perfect {
        return record.suffix.clone();
    }
    match record.task {
        TaskKind::Detection | TaskKind::Segmentation => corrupt_instances(record, config),
        TaskKind::Diagnosis => {
            let mut d = draws(config, record, 0);
            if d.flip < config.answer_flip_prob {
                flip_diagnosis(&record.suffix, &mut d.rng)
            } else {
                record.suffix.clone()
            }
        }
        TaskKind::Vqa if record.is_closed_question() => {
            let mut d = draws(config, record, 0);
            if d.flip < config.answer_flip_prob {
                flip_closed(&record.suffix, &mut d.rng)
            } else {
                record.suffix.clone()
            }
        }
        TaskKind::Vqa | TaskKind::Report => record.suffix.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RecordMeta;

    fn rec(task: TaskKind, suffix: &str) -> TaskRecord {
        TaskRecord {
            task,
            image_id: "img".into(),
            prefix: "p".into(),
            suffix: suffix.into(),
            meta: RecordMeta::default(),
        }
    }

    fn corrupted(seed: u64) -> OracleConfig {
        OracleConfig {
            mode: OracleMode::Corrupted,
            seed,
            ..Default::default()
        }
    }

    const DET: &str =
        "<loc0100><loc0200><loc0300><loc0400> cavity ; <loc0000><loc0010><loc0998><loc0999> nodule";

    #[test]
    fn perfect_is_identity() {
        let mut c = OracleConfig::perfect();
        c.drop_prob = 1.0;
        assert_eq!(oracle_predict(&rec(TaskKind::Detection, DET), &c), DET);
    }

    #[test]
    fn total_drop_is_empty() {
        let c = OracleConfig {
            drop_prob: 1.0,
            ..corrupted(1)
        };
        assert_eq!(oracle_predict(&rec(TaskKind::Detection, DET), &c), "");
    }

    #[test]
    fn jitter_is_bounded_and_clamped() {
        let c = OracleConfig {
            jitter_bins: 2,
            ..corrupted(5)
        };
        let out = oracle_predict(&rec(TaskKind::Detection, DET), &c);
        let idx = |s: &str| -> Vec<i64> {
            s.match_indices("<loc")
                .map(|(i, _)| s[i + 4..i + 8].parse().unwrap())
                .collect()
        };
        let (a, b) = (idx(DET), idx(&out));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 2 && (0..1000).contains(y));
        }
    }

    #[test]
    fn garbled_segments_break_parsing() {
        assert_eq!(garble("<loc0001><loc0002> x"), "<loc0001<loc0002> x");
    }

    #[test]
    fn flips_change_closed_answers() {
        let c = OracleConfig {
            answer_flip_prob: 1.0,
            ..corrupted(2)
        };
        let mut r = rec(TaskKind::Vqa, "yes");
        r.meta.answer_type = Some(crate::dataset::AnswerType::Closed);
        assert_eq!(oracle_predict(&r, &c), "no");
        r.suffix = "3".into();
        assert_ne!(oracle_predict(&r, &c), "3");
        let d = oracle_predict(&rec(TaskKind::Diagnosis, "normal"), &c);
        assert_ne!(d, "normal");
        assert!(d.parse::<DiagnosisLabel>().is_ok());
        let open = rec(TaskKind::Vqa, "upper zone of the left lung");
        assert_eq!(oracle_predict(&open, &c), open.suffix);
    }

    #[test]
    fn drops_grow_with_probability() {
        let r = rec(TaskKind::Detection, DET);
        let mut prev = usize::MAX;
        for p in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let c = OracleConfig {
                drop_prob: p,
                ..corrupted(9)
            };
            let out = oracle_predict(&r, &c);
            let n = if out.is_empty() {
                0
            } else {
                out.split(" ; ").count()
            };
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn validation() {
        let c = OracleConfig {
            garble_prob: 1.5,
            ..corrupted(0)
        };
        assert!(c.validate().is_err());
        assert!(corrupted(0).validate().is_ok());
    }
}
