//! ROC curves, tie-corrected AUC and aggregation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::datapipe::{Pathology, NUM_PATHOLOGIES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive. The first point uses `+inf`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// ROC curve and Mann–Whitney AUC; tied scores earn half credit.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::dim("roc_auc", &[scores.len()], &[labels.len()]));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Contract(format!("score {bad} is not comparable")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Walk tie groups from the highest score down. Each group contributes its
    // ROC point; mid-ranks (counted from the top) feed the U statistic.
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    // u counts (positive, negative) pairs ranked correctly, in halves
    let mut u_halves: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == s {
            if labels[order[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        // positives in this group beat every negative below it, tie with gn
        let below = negatives - fp - gn;
        u_halves += (gp as u128) * (2 * below as u128 + gn as u128);
        tp += gp;
        fp += gn;
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold: s,
        });
        i = j;
    }

    let n = (positives as u128) * (negatives as u128) * 2;
    // pick the branch so that auc(s) + auc(-s) == 1 holds in floating point
    let auc = if 2 * u_halves > n {
        1.0 - (n - u_halves) as f64 / n as f64
    } else {
        u_halves as f64 / n as f64
    };
    Ok(RocCurve {
        points,
        auc,
        positives,
        negatives,
    })
}

/// Trapezoidal area under `(fpr, tpr)` points.
pub fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

impl RocCurve {
    pub fn trapezoid_area(&self) -> f64 {
        trapezoid(&self.points)
    }

    /// CSV with header `fpr,tpr,threshold`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Arithmetic mean and population std of the values.
pub fn aggregate_auc(values: &[f64]) -> Result<AucSummary> {
    if values.is_empty() {
        return Err(Error::Empty("AUC values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(AucSummary {
        mean,
        std: var.sqrt(),
    })
}

/// Mean of per-seed class means, with population std across seeds.
pub fn aggregate_over_seeds(per_seed: &[Vec<f64>]) -> Result<AucSummary> {
    let means = per_seed
        .iter()
        .map(|v| aggregate_auc(v).map(|s| s.mean))
        .collect::<Result<Vec<_>>>()?;
    aggregate_auc(&means)
}

/// Per-study class scores, as read from or written to a scores CSV with
/// header `study_id,atelectasis,cardiomegaly,consolidation,edema,pleural_effusion`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub study_ids: Vec<String>,
    pub scores: Vec<[f64; NUM_PATHOLOGIES]>,
}

impl ScoreTable {
    pub fn push(&mut self, id: impl Into<String>, row: [f64; NUM_PATHOLOGIES]) {
        self.study_ids.push(id.into());
        self.scores.push(row);
    }

    pub fn len(&self) -> usize {
        self.study_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.study_ids.is_empty()
    }

    pub fn column(&self, p: Pathology) -> Vec<f64> {
        self.scores.iter().map(|r| r[p.index()]).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["study_id".to_string()];
        header.extend(Pathology::ALL.iter().map(|p| p.key().to_string()));
        w.write_record(&header)?;
        for (id, row) in self.study_ids.iter().zip(&self.scores) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let mut cols = [0usize; NUM_PATHOLOGIES];
        let id_col = header.iter().position(|h| h == "study_id").ok_or_else(|| Error::Format {
            offset: 0,
            message: "scores CSV has no study_id column".into(),
        })?;
        for p in Pathology::ALL {
            cols[p.index()] = header.iter().position(|h| h == p.key()).ok_or_else(|| Error::Format {
                offset: 0,
                message: format!("scores CSV has no {} column", p.key()),
            })?;
        }
        let mut table = ScoreTable::default();
        for rec in r.records() {
            let rec = rec?;
            let offset = rec.position().map_or(0, |p| p.byte() as usize);
            let mut row = [0.0; NUM_PATHOLOGIES];
            for (slot, &c) in row.iter_mut().zip(&cols) {
                let field = rec.get(c).unwrap_or("");
                *slot = field.trim().parse().map_err(|_| Error::Format {
                    offset,
                    message: format!("invalid score {field:?}"),
                })?;
            }
            table.push(rec.get(id_col).unwrap_or("").to_string(), row);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_inverted() {
        let labels = [true, true, false, false];
        let c = roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.points.first().unwrap().fpr, 0.0);
        assert_eq!(c.points.last().unwrap().tpr, 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap().auc, 0.0);
    }

    #[test]
    fn all_tied_is_half() {
        let c = roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.trapezoid_area(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedAuc { positives: 2, negatives: 0 })
        ));
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn curve_is_monotone() {
        let scores = [0.3, 0.1, 0.7, 0.7, 0.2, 0.9, 0.3];
        let labels = [true, false, true, false, false, true, true];
        let c = roc_auc(&scores, &labels).unwrap();
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            assert!(w[1].threshold < w[0].threshold);
        }
        assert!((c.trapezoid_area() - c.auc).abs() < 1e-12);
    }

    #[test]
    fn roc_csv_header() {
        let c = roc_auc(&[0.9, 0.1], &[true, false]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("fpr,tpr,threshold\n0.0,0.0,inf\n"), "{text}");
    }

    #[test]
    fn aggregate_cases() {
        let one = aggregate_auc(&[0.7]).unwrap();
        assert_eq!((one.mean, one.std), (0.7, 0.0));
        let s = aggregate_auc(&[0.6, 0.8]).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-15 && (s.std - 0.1).abs() < 1e-15);
        assert!(aggregate_auc(&[]).is_err());
        let seeds = aggregate_over_seeds(&[vec![0.6, 0.8], vec![0.8, 1.0]]).unwrap();
        assert!((seeds.mean - 0.8).abs() < 1e-15 && (seeds.std - 0.1).abs() < 1e-15);
    }

    #[test]
    fn score_table_round_trip() {
        let mut t = ScoreTable::default();
        t.push("a", [0.1, 0.2, 0.3, 0.4, 0.5]);
        t.push("b", [-1.5, 0.0, 1e-17, 2.0, 0.25]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(ScoreTable::read_csv(&buf[..]).unwrap(), t);
        let bad = "study_id,atelectasis\na,0.1\n";
        assert!(matches!(ScoreTable::read_csv(bad.as_bytes()), Err(Error::Format { .. })));
    }
}
