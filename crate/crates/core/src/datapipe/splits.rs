use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::records::StudyRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSize {
    Exact(usize),
    /// Whatever remains after the exact splits.
    Rest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRequest {
    pub name: String,
    pub size: SplitSize,
}

impl SplitRequest {
    pub fn exact(name: impl Into<String>, n: usize) -> Self {
        Self {
            name: name.into(),
            size: SplitSize::Exact(n),
        }
    }

    pub fn rest(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            size: SplitSize::Rest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub name: String,
    pub study_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    /// SHA-256 over the source records' JSON lines.
    pub source_hash: String,
    pub splits: Vec<Split>,
}

impl SplitManifest {
    pub fn get(&self, name: &str) -> Option<&Split> {
        self.splits.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn records_hash(records: &[StudyRecord]) -> Result<String> {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r)?);
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

/// Seeded sampling without replacement. Records are shuffled once and dealt
/// to the splits in declared order; ids within a split keep manifest order.
pub fn make_splits(records: &[StudyRecord], requests: &[SplitRequest], seed: u64) -> Result<SplitManifest> {
    let rests = requests.iter().filter(|r| r.size == SplitSize::Rest).count();
    if rests > 1 {
        return Err(Error::Contract("at most one split may take the rest".into()));
    }
    let exact: usize = requests
        .iter()
        .map(|r| match r.size {
            SplitSize::Exact(n) => n,
            SplitSize::Rest => 0,
        })
        .sum();
    if exact > records.len() {
        return Err(Error::SplitSize {
            requested: exact,
            available: records.len(),
        });
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut cursor = 0;
    let mut assigned: HashMap<usize, usize> = HashMap::new();
    for (k, req) in requests.iter().enumerate() {
        let n = match req.size {
            SplitSize::Exact(n) => n,
            SplitSize::Rest => records.len() - exact,
        };
        for &idx in &order[cursor..cursor + n] {
            assigned.insert(idx, k);
        }
        cursor += n;
    }

    let mut splits: Vec<Split> = requests
        .iter()
        .map(|r| Split {
            name: r.name.clone(),
            study_ids: Vec::new(),
        })
        .collect();
    for (idx, rec) in records.iter().enumerate() {
        if let Some(&k) = assigned.get(&idx) {
            splits[k].study_ids.push(rec.study_id.clone());
        }
    }
    Ok(SplitManifest {
        seed,
        source_hash: records_hash(records)?,
        splits,
    })
}
