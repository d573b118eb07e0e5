use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{LabelValue, Pathology};
use super::records::StudyRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetClass {
    pub pathology: Pathology,
    /// Eligible records before the cap was applied.
    pub candidates: usize,
    pub study_ids: Vec<String>,
}

impl SubsetClass {
    pub fn count(&self) -> usize {
        self.study_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub seed: u64,
    pub per_class_cap: usize,
    pub classes: Vec<SubsetClass>,
}

/// True when `p` is the record's only positive label and no label is
/// uncertain.
pub fn is_single_disease(rec: &StudyRecord, p: Pathology) -> bool {
    let labels = &rec.labels;
    labels.get(p) == LabelValue::Positive
        && Pathology::ALL.iter().all(|&q| {
            let v = labels.get(q);
            v != LabelValue::Uncertain && (q == p || v != LabelValue::Positive)
        })
}

/// Per pathology, the records positive for exactly that disease, capped by
/// seeded sampling. Selected ids keep manifest order.
pub fn build_single_disease_subset(records: &[StudyRecord], per_class_cap: usize, seed: u64) -> SubsetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = Pathology::ALL
        .iter()
        .map(|&p| {
            let eligible: Vec<&StudyRecord> =
                records.iter().filter(|r| is_single_disease(r, p)).collect();
            let chosen: Vec<String> = if eligible.len() <= per_class_cap {
                eligible.iter().map(|r| r.study_id.clone()).collect()
            } else {
                let mut picks = sample(&mut rng, eligible.len(), per_class_cap).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| eligible[i].study_id.clone()).collect()
            };
            SubsetClass {
                pathology: p,
                candidates: eligible.len(),
                study_ids: chosen,
            }
        })
        .collect();
    SubsetManifest {
        seed,
        per_class_cap,
        classes,
    }
}
