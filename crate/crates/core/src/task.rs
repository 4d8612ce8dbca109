use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five tasks, in the order used for mixture ratios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Diagnosis,
    Detection,
    Report,
    Vqa,
    Segmentation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Diagnosis,
        TaskKind::Detection,
        TaskKind::Report,
        TaskKind::Vqa,
        TaskKind::Segmentation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Diagnosis => "diagnosis",
            TaskKind::Detection => "detection",
            TaskKind::Report => "report",
            TaskKind::Vqa => "vqa",
            TaskKind::Segmentation => "segmentation",
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "task",
                value: s.to_string(),
            })
    }
}
