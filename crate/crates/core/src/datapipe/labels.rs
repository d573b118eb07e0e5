use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// The five target pathologies, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pathology {
    Atelectasis,
    Cardiomegaly,
    Consolidation,
    Edema,
    PleuralEffusion,
}

pub const NUM_PATHOLOGIES: usize = 5;

impl Pathology {
    pub const ALL: [Pathology; NUM_PATHOLOGIES] = [
        Pathology::Atelectasis,
        Pathology::Cardiomegaly,
        Pathology::Consolidation,
        Pathology::Edema,
        Pathology::PleuralEffusion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Human-readable name, e.g. `"pleural effusion"`.
    pub fn name(self) -> &'static str {
        match self {
            Pathology::Atelectasis => "atelectasis",
            Pathology::Cardiomegaly => "cardiomegaly",
            Pathology::Consolidation => "consolidation",
            Pathology::Edema => "edema",
            Pathology::PleuralEffusion => "pleural effusion",
        }
    }

    /// Identifier form used as JSON key and CSV column, e.g. `"pleural_effusion"`.
    pub fn key(self) -> &'static str {
        match self {
            Pathology::PleuralEffusion => "pleural_effusion",
            other => other.name(),
        }
    }
}

impl fmt::Display for Pathology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pathology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace(['_', '-'], " ");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| Error::Consistency(format!("unknown pathology {s:?}")))
    }
}

impl Serialize for Pathology {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Pathology {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One slot of a [`LabelVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LabelValue {
    Positive,
    Negative,
    Uncertain,
    /// Not mentioned in the report.
    #[default]
    Blank,
}

impl LabelValue {
    pub fn code(self) -> Option<i8> {
        match self {
            LabelValue::Positive => Some(1),
            LabelValue::Negative => Some(0),
            LabelValue::Uncertain => Some(-1),
            LabelValue::Blank => None,
        }
    }

    pub fn from_code(code: Option<i64>) -> Result<Self, Error> {
        match code {
            Some(1) => Ok(LabelValue::Positive),
            Some(0) => Ok(LabelValue::Negative),
            Some(-1) => Ok(LabelValue::Uncertain),
            None => Ok(LabelValue::Blank),
            Some(other) => Err(Error::Consistency(format!(
                "label value {other} is not one of 1, 0, -1, null"
            ))),
        }
    }

    /// Binary target under `policy`; blank counts as negative. `None` means
    /// the label is excluded.
    pub fn binary(self, policy: UncertainPolicy) -> Option<bool> {
        match self {
            LabelValue::Positive => Some(true),
            LabelValue::Negative | LabelValue::Blank => Some(false),
            LabelValue::Uncertain => match policy {
                UncertainPolicy::Exclude => None,
                UncertainPolicy::Positive => Some(true),
                UncertainPolicy::Negative => Some(false),
            },
        }
    }

    /// Cross-sentence precedence: 1 > -1 > 0 > blank.
    pub(crate) fn rank(self) -> u8 {
        match self {
            LabelValue::Positive => 3,
            LabelValue::Uncertain => 2,
            LabelValue::Negative => 1,
            LabelValue::Blank => 0,
        }
    }
}

/// How uncertain (-1) labels become binary targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertainPolicy {
    #[default]
    Exclude,
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl FromStr for UncertainPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(UncertainPolicy::Exclude),
            "pos" => Ok(UncertainPolicy::Positive),
            "neg" => Ok(UncertainPolicy::Negative),
            other => Err(Error::Consistency(format!(
                "unknown uncertain policy {other:?} (expected exclude, pos or neg)"
            ))),
        }
    }
}

/// Per-pathology labels in canonical order; serialized as a 5-element
/// array over `{1, 0, -1, null}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector(pub [LabelValue; NUM_PATHOLOGIES]);

impl LabelVector {
    pub fn blank() -> Self {
        Self::default()
    }

    pub fn get(&self, p: Pathology) -> LabelValue {
        self.0[p.index()]
    }

    pub fn set(&mut self, p: Pathology, v: LabelValue) {
        self.0[p.index()] = v;
    }

    pub fn with(mut self, p: Pathology, v: LabelValue) -> Self {
        self.set(p, v);
        self
    }

    pub fn positives(&self) -> impl Iterator<Item = Pathology> + '_ {
        Pathology::ALL
            .into_iter()
            .filter(|p| self.get(*p) == LabelValue::Positive)
    }

    pub fn codes(&self) -> [Option<i8>; NUM_PATHOLOGIES] {
        self.0.map(LabelValue::code)
    }
}

impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.codes().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw: Vec<Option<i64>> = Vec::deserialize(d)?;
        if raw.len() != NUM_PATHOLOGIES {
            return Err(serde::de::Error::custom(format!(
                "labels must have {NUM_PATHOLOGIES} entries, got {}",
                raw.len()
            )));
        }
        let mut out = LabelVector::blank();
        for (slot, code) in out.0.iter_mut().zip(raw) {
            *slot = LabelValue::from_code(code).map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pathology_names_round_trip() {
        for p in Pathology::ALL {
            assert_eq!(p.name().parse::<Pathology>().unwrap(), p);
            assert_eq!(p.key().parse::<Pathology>().unwrap(), p);
        }
        assert!("pneumonia".parse::<Pathology>().is_err());
    }

    #[test]
    fn label_vector_json() {
        let v = LabelVector::blank()
            .with(Pathology::Cardiomegaly, LabelValue::Positive)
            .with(Pathology::Edema, LabelValue::Uncertain)
            .with(Pathology::PleuralEffusion, LabelValue::Negative);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "[null,1,null,-1,0]");
        assert_eq!(serde_json::from_str::<LabelVector>(&json).unwrap(), v);
        assert!(serde_json::from_str::<LabelVector>("[1,0]").is_err());
        assert!(serde_json::from_str::<LabelVector>("[2,0,0,0,0]").is_err());
    }

    #[test]
    fn binary_mapping() {
        assert_eq!(LabelValue::Blank.binary(UncertainPolicy::Exclude), Some(false));
        assert_eq!(LabelValue::Uncertain.binary(UncertainPolicy::Exclude), None);
        assert_eq!(LabelValue::Uncertain.binary(UncertainPolicy::Positive), Some(true));
        assert_eq!(LabelValue::Uncertain.binary(UncertainPolicy::Negative), Some(false));
    }
}
