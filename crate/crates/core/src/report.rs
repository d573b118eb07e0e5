use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datapipe::{LabelVector, Pathology, UncertainPolicy, NUM_PATHOLOGIES};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_auc, roc_auc, RocCurve};
use crate::numerics::Tensor;

/// Summary written by every command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    /// Per-pathology AUC; `null` where a class had a single label value.
    pub aucs: BTreeMap<Pathology, Option<f64>>,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    /// Other scalar results, e.g. retrieval accuracy or final loss.
    pub metrics: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    /// Records per-class AUCs and their mean and population std.
    pub fn set_aucs(&mut self, aucs: &[Option<f64>; NUM_PATHOLOGIES]) {
        self.aucs = Pathology::ALL.iter().map(|p| (*p, aucs[p.index()])).collect();
        let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
        match aggregate_auc(&defined) {
            Ok(s) => {
                self.mean_auc = Some(s.mean);
                self.std_auc = Some(s.std);
            }
            Err(_) => {
                self.mean_auc = None;
                self.std_auc = None;
            }
        }
    }

    /// Copy with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Binary targets of one pathology, with excluded rows dropped.
pub fn class_targets(
    scores: &[f64],
    labels: &[LabelVector],
    p: Pathology,
    policy: UncertainPolicy,
) -> (Vec<f64>, Vec<bool>) {
    scores
        .iter()
        .zip(labels)
        .filter_map(|(&s, l)| l.get(p).binary(policy).map(|y| (s, y)))
        .unzip()
}

/// ROC curve per pathology of `[N, 5]` scores; `None` where the AUC is
/// undefined.
pub fn per_class_roc(
    scores: &Tensor,
    labels: &[LabelVector],
    policy: UncertainPolicy,
) -> Result<Vec<Option<RocCurve>>> {
    if scores.cols() != NUM_PATHOLOGIES || scores.rows() != labels.len() {
        return Err(Error::dim("class scores", scores.shape(), &[labels.len(), NUM_PATHOLOGIES]));
    }
    Pathology::ALL
        .iter()
        .map(|&p| {
            let column: Vec<f64> = (0..scores.rows()).map(|r| scores.get(r, p.index())).collect();
            let (s, y) = class_targets(&column, labels, p, policy);
            match roc_auc(&s, &y) {
                Ok(c) => Ok(Some(c)),
                Err(Error::UndefinedAuc { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn per_class_auc(
    scores: &Tensor,
    labels: &[LabelVector],
    policy: UncertainPolicy,
) -> Result<[Option<f64>; NUM_PATHOLOGIES]> {
    let curves = per_class_roc(scores, labels, policy)?;
    let mut out = [None; NUM_PATHOLOGIES];
    for (slot, c) in out.iter_mut().zip(curves) {
        *slot = c.map(|c| c.auc);
    }
    Ok(out)
}
