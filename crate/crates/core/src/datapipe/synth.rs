//! Seeded synthetic corpora.
//!
//! Paired studies carry an image whose class-specific pattern sits in a
//! class-specific region, and a short report naming the class among
//! distractor sentences. Mixed manifests carry report text and views only,
//! for exercising filtering, splitting and labeling at realistic sizes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labeler::{label_report, Lexicon};
use super::labels::{LabelValue, LabelVector, Pathology, NUM_PATHOLOGIES};
use super::records::{StudyRecord, View};
use crate::encoders::ImageGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of classes, taken from the start of the pathology list.
    pub classes: usize,
    pub train: usize,
    pub held_out: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    /// Regions per side.
    pub grid: usize,
    /// Amplitude of uniform pixel noise.
    pub noise: f64,
    /// Distractor sentences per report.
    pub distractors: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            train: 500,
            held_out: 200,
            image_size: 24,
            grid: 3,
            noise: 0.1,
            distractors: 2,
        }
    }
}

const PATTERN_CELLS: usize = 4;
const BACKGROUND: f64 = 0.1;
const FOREGROUND: f64 = 0.8;

const LEAD_INS: [&str; 3] = ["findings consistent with", "evidence of", "there is"];

const DISTRACTORS: [&str; 6] = [
    "the lungs are otherwise clear",
    "bony structures are intact",
    "the trachea is midline",
    "the mediastinal contours are normal",
    "pa and lateral views of the chest were obtained",
    "visualized upper abdomen is unremarkable",
];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > NUM_PATHOLOGIES {
            return Err(Error::Contract(format!(
                "class count must be in 1..={NUM_PATHOLOGIES}, got {}",
                self.classes
            )));
        }
        if self.grid == 0 || self.image_size % (self.grid * PATTERN_CELLS) != 0 {
            return Err(Error::Contract(format!(
                "image size {} must be a multiple of {} (grid {} x {PATTERN_CELLS} pattern cells)",
                self.image_size,
                self.grid * PATTERN_CELLS,
                self.grid
            )));
        }
        if self.distractors > DISTRACTORS.len() {
            return Err(Error::Contract(format!(
                "at most {} distractor sentences are available",
                DISTRACTORS.len()
            )));
        }
        if !(0.0..=0.2).contains(&self.noise) {
            return Err(Error::Parameter {
                name: "noise",
                value: self.noise,
                reason: "must lie in [0, 0.2]",
            });
        }
        Ok(())
    }

    pub fn regions(&self) -> usize {
        self.grid * self.grid
    }

    /// Region holding the pattern of class `c`.
    pub fn class_region(&self, c: usize) -> usize {
        (2 * c) % self.regions()
    }
}

/// 4×4 on/off pattern of class `c`.
fn pattern(c: usize, y: usize, x: usize) -> bool {
    match c % 5 {
        0 => y % 2 == 0,
        1 => x % 2 == 0,
        2 => (x + y) % 2 == 0,
        3 => x == y || x + y == 3,
        _ => x == 0 || y == 0 || x == 3 || y == 3,
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn synth_image(cfg: &SynthConfig, class: usize, rng: &mut ChaCha8Rng) -> Result<ImageGrid> {
    let n = cfg.image_size;
    let region = n / cfg.grid;
    let cell = region / PATTERN_CELLS;
    let r = cfg.class_region(class);
    let (x0, y0) = ((r % cfg.grid) * region, (r / cfg.grid) * region);
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let inside = x >= x0 && x < x0 + region && y >= y0 && y < y0 + region;
            let on = inside && pattern(class, (y - y0) / cell, (x - x0) / cell);
            let base = if on { FOREGROUND } else { BACKGROUND };
            let jitter = if cfg.noise > 0.0 { rng.gen_range(0.0..cfg.noise) } else { 0.0 };
            pixels.push(quantize(base + jitter));
        }
    }
    ImageGrid::new(n, n, pixels, cfg.grid, cfg.grid)
}

fn synth_report(cfg: &SynthConfig, class: usize, rng: &mut ChaCha8Rng) -> String {
    let name = Pathology::ALL[class].name();
    let lead = LEAD_INS.choose(rng).expect("non-empty");
    let mut sentences: Vec<String> = DISTRACTORS
        .choose_multiple(rng, cfg.distractors)
        .map(|s| s.to_string())
        .collect();
    let at = rng.gen_range(0..=sentences.len());
    sentences.insert(at, format!("{lead} {name}"));
    let mut text = sentences.join(". ");
    text.push('.');
    text
}

fn synth_split(cfg: &SynthConfig, prefix: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<StudyRecord>> {
    (0..n)
        .map(|i| {
            let class = i % cfg.classes;
            let mut rec = StudyRecord::new(format!("{prefix}-{i:04}"), View::Frontal, synth_report(cfg, class, rng));
            rec.labels = LabelVector::blank().with(Pathology::ALL[class], LabelValue::Positive);
            rec.image = Some(synth_image(cfg, class, rng)?);
            Ok(rec)
        })
        .collect()
}

/// Class-balanced `(train, held_out)` paired studies with inline images.
/// Study `i` of each split belongs to class `i % classes`.
pub fn synth_paired_dataset(cfg: &SynthConfig, seed: u64) -> Result<(Vec<StudyRecord>, Vec<StudyRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = synth_split(cfg, "train", cfg.train, &mut rng)?;
    let held_out = synth_split(cfg, "test", cfg.held_out, &mut rng)?;
    Ok((train, held_out))
}

/// Class of a synthetic study: its single positive pathology.
pub fn synth_class(rec: &StudyRecord) -> Option<usize> {
    let mut pos = rec.labels.positives();
    match (pos.next(), pos.next()) {
        (Some(p), None) => Some(p.index()),
        _ => None,
    }
}

const NEGATED: [&str; 3] = ["no", "no evidence of", "without"];
const HEDGED: [&str; 3] = ["possible", "cannot exclude", "findings suggestive of"];

/// Manifest of `total` studies of which exactly `frontal` have a frontal
/// view; the rest are lateral or unknown. Reports mix positive, negated and
/// hedged mentions and are labeled with the default lexicon.
pub fn synth_mixed_manifest(total: usize, frontal: usize, seed: u64) -> Result<Vec<StudyRecord>> {
    if frontal > total {
        return Err(Error::SplitSize {
            requested: frontal,
            available: total,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views: Vec<View> = (0..total)
        .map(|i| {
            if i < frontal {
                View::Frontal
            } else if i % 7 == 0 {
                View::Unknown
            } else {
                View::Lateral
            }
        })
        .collect();
    views.shuffle(&mut rng);
    let lexicon = Lexicon::default();
    views
        .into_iter()
        .enumerate()
        .map(|(i, view)| {
            let mut sentences = Vec::new();
            for p in Pathology::ALL {
                let name = p.name();
                match rng.gen_range(0..6) {
                    0 => sentences.push(format!("{} {name}", LEAD_INS.choose(&mut rng).expect("non-empty"))),
                    1 => sentences.push(format!("{} {name}", NEGATED.choose(&mut rng).expect("non-empty"))),
                    2 => sentences.push(format!("{} {name}", HEDGED.choose(&mut rng).expect("non-empty"))),
                    _ => {}
                }
            }
            sentences.push(DISTRACTORS.choose(&mut rng).expect("non-empty").to_string());
            sentences.shuffle(&mut rng);
            let report = format!("{}.", sentences.join(". "));
            let mut rec = StudyRecord::new(format!("study-{i:05}"), view, report);
            rec.labels = label_report(&rec.report, &lexicon)?;
            rec.image_path = Some(format!("images/study-{i:05}.pgm"));
            Ok(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::filter_frontal;

    #[test]
    fn balanced_and_labeled() {
        let cfg = SynthConfig {
            train: 50,
            held_out: 10,
            ..SynthConfig::default()
        };
        let (train, test) = synth_paired_dataset(&cfg, 7).unwrap();
        assert_eq!((train.len(), test.len()), (50, 10));
        let mut counts = [0; 5];
        for r in &train {
            counts[synth_class(r).unwrap()] += 1;
        }
        assert_eq!(counts, [10; 5]);
        let lexicon = Lexicon::default();
        for r in train.iter().chain(&test) {
            assert_eq!(label_report(&r.report, &lexicon).unwrap(), r.labels, "{}", r.report);
        }
    }

    #[test]
    fn noiseless_patterns_repeat() {
        let cfg = SynthConfig {
            train: 10,
            held_out: 0,
            noise: 0.0,
            ..SynthConfig::default()
        };
        let (train, _) = synth_paired_dataset(&cfg, 1).unwrap();
        assert_eq!(train[0].image, train[5].image);
        assert_ne!(train[0].image, train[1].image);
    }

    #[test]
    fn pattern_lands_in_class_region() {
        let cfg = SynthConfig {
            noise: 0.0,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in 0..5 {
            let img = synth_image(&cfg, c, &mut rng).unwrap();
            let p = img.patch_vectors(4).unwrap();
            for r in 0..9 {
                let bright = p.row(r).iter().any(|&v| v > 0.5);
                assert_eq!(bright, r == cfg.class_region(c), "class {c} region {r}");
            }
        }
    }

    #[test]
    fn mixed_manifest_counts() {
        let recs = synth_mixed_manifest(300, 200, 4).unwrap();
        assert_eq!(recs.len(), 300);
        assert_eq!(filter_frontal(recs).len(), 200);
    }
}
