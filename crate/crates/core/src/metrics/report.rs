//! Per-task metric bundle written as JSON with six-decimal numbers.

use std::collections::BTreeMap;

use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::task::TaskKind;

/// A metric tree. Real numbers are written with exactly six decimals.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    Real(f64),
    Count(u64),
    Map(BTreeMap<String, Metric>),
}

impl Metric {
    pub fn map() -> Self {
        Metric::Map(BTreeMap::new())
    }

    /// Insert into a `Map`; no-op on other variants.
    pub fn with(mut self, key: impl Into<String>, value: impl Into<Metric>) -> Self {
        if let Metric::Map(m) = &mut self {
            m.insert(key.into(), value.into());
        }
        self
    }

    pub fn get(&self, path: &[&str]) -> Option<&Metric> {
        match path.split_first() {
            None => Some(self),
            Some((head, rest)) => match self {
                Metric::Map(m) => m.get(*head)?.get(rest),
                _ => None,
            },
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Metric::Real(x) => Some(*x),
            Metric::Count(n) => Some(*n as f64),
            Metric::Map(_) => None,
        }
    }
}

impl From<f64> for Metric {
    fn from(x: f64) -> Self {
        Metric::Real(x)
    }
}

impl From<u64> for Metric {
    fn from(n: u64) -> Self {
        Metric::Count(n)
    }
}

impl From<usize> for Metric {
    fn from(n: usize) -> Self {
        Metric::Count(n as u64)
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Real(x) if x.is_finite() => {
                let raw =
                    RawValue::from_string(format!("{x:.6}")).map_err(serde::ser::Error::custom)?;
                raw.serialize(s)
            }
            Metric::Real(_) => s.serialize_none(),
            Metric::Count(n) => s.serialize_u64(*n),
            Metric::Map(m) => m.serialize(s),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub tasks: BTreeMap<TaskKind, Metric>,
}

impl EvalReport {
    pub fn get(&self, task: TaskKind, path: &[&str]) -> Option<f64> {
        self.tasks.get(&task)?.get(path)?.as_f64()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metric trees always serialize");
        s.push('\n');
        s
    }
}

impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tasks.serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_decimals() {
        let mut r = EvalReport::default();
        r.tasks.insert(
            TaskKind::Diagnosis,
            Metric::map()
                .with("accuracy", 2.0 / 3.0)
                .with("total", 3u64)
                .with("per_class", Metric::map().with("normal", 1.0)),
        );
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"diagnosis":{"accuracy":0.666667,"per_class":{"normal":1.000000},"total":3}}"#
        );
        assert_eq!(
            r.get(TaskKind::Diagnosis, &["per_class", "normal"]),
            Some(1.0)
        );
    }
}
