//! Rule-based report labeler.
//!
//! Reports are split into sentences on `.`, `;` and `:`. Within a sentence a
//! pathology mention is uncertain if any uncertainty cue occurs anywhere in
//! the sentence, otherwise negated if a negation cue begins within
//! `negation_window` tokens before the mention, otherwise positive.
//! Sentence verdicts combine across the report with precedence
//! `1 > -1 > 0 > blank`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::{LabelValue, LabelVector, Pathology};
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const DEFAULT_NEGATION_WINDOW: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub mentions: BTreeMap<Pathology, Vec<String>>,
    pub negation_cues: Vec<String>,
    pub uncertainty_cues: Vec<String>,
    #[serde(default = "default_window")]
    pub negation_window: usize,
}

fn default_window() -> usize {
    DEFAULT_NEGATION_WINDOW
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        let mut mentions = BTreeMap::new();
        mentions.insert(
            Pathology::Atelectasis,
            strings(&["atelectasis", "atelectases", "atelectatic"]),
        );
        mentions.insert(
            Pathology::Cardiomegaly,
            strings(&[
                "cardiomegaly",
                "enlarged heart",
                "heart size is enlarged",
                "enlarged cardiac silhouette",
                "cardiac enlargement",
            ]),
        );
        mentions.insert(
            Pathology::Consolidation,
            strings(&["consolidation", "consolidations", "consolidative"]),
        );
        mentions.insert(Pathology::Edema, strings(&["edema", "oedema"]));
        mentions.insert(
            Pathology::PleuralEffusion,
            strings(&[
                "pleural effusion",
                "pleural effusions",
                "effusion",
                "effusions",
                "pleural fluid",
            ]),
        );
        Self {
            mentions,
            negation_cues: strings(&[
                "no",
                "not",
                "without",
                "negative for",
                "free of",
                "absence of",
                "resolution of",
            ]),
            uncertainty_cues: strings(&[
                "possible",
                "possibly",
                "probable",
                "probably",
                "may",
                "might",
                "could",
                "likely",
                "questionable",
                "suspected",
                "suspicious for",
                "concerning for",
                "suggestive of",
                "cannot exclude",
                "cannot be excluded",
                "versus",
                "borderline",
                "equivocal",
                "rule out",
            ]),
            negation_window: DEFAULT_NEGATION_WINDOW,
        }
    }
}

impl Lexicon {
    pub fn load(path: &Path) -> Result<Self> {
        let lex: Lexicon = serde_json::from_slice(&std::fs::read(path)?)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn validate(&self) -> Result<()> {
        for p in Pathology::ALL {
            match self.mentions.get(&p) {
                Some(list) if !list.is_empty() && list.iter().all(|s| !tokenize(s).is_empty()) => {}
                _ => {
                    return Err(Error::Consistency(format!(
                        "lexicon has no usable mention phrases for {p}"
                    )))
                }
            }
        }
        if self.negation_cues.is_empty() || self.uncertainty_cues.is_empty() {
            return Err(Error::Consistency("lexicon cue lists must be non-empty".into()));
        }
        for cue in self.negation_cues.iter().chain(&self.uncertainty_cues) {
            if cue.to_lowercase() != *cue || tokenize(cue).is_empty() {
                return Err(Error::Consistency(format!(
                    "cue {cue:?} must be lowercase and non-empty"
                )));
            }
        }
        Ok(())
    }
}

/// Start indices where `phrase` occurs as a token subsequence of `tokens`.
fn occurrences(tokens: &[String], phrase: &[String]) -> Vec<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return Vec::new();
    }
    (0..=tokens.len() - phrase.len())
        .filter(|&s| tokens[s..s + phrase.len()] == *phrase)
        .collect()
}

/// Tokenized lexicon, ready for repeated labeling.
#[derive(Debug, Clone)]
pub struct Labeler {
    mentions: Vec<(Pathology, Vec<String>)>,
    negation: Vec<Vec<String>>,
    uncertainty: Vec<Vec<String>>,
    window: usize,
}

impl Labeler {
    pub fn new(lexicon: &Lexicon) -> Result<Self> {
        lexicon.validate()?;
        let mentions = lexicon
            .mentions
            .iter()
            .flat_map(|(p, phrases)| phrases.iter().map(move |s| (*p, tokenize(s))))
            .collect();
        Ok(Self {
            mentions,
            negation: lexicon.negation_cues.iter().map(|c| tokenize(c)).collect(),
            uncertainty: lexicon.uncertainty_cues.iter().map(|c| tokenize(c)).collect(),
            window: lexicon.negation_window,
        })
    }

    pub fn label(&self, text: &str) -> LabelVector {
        let mut out = LabelVector::blank();
        for sentence in text.split(['.', ';', ':']) {
            let tokens = tokenize(sentence);
            if tokens.is_empty() {
                continue;
            }
            for (p, verdict) in self.sentence_verdicts(&tokens) {
                if verdict.rank() > out.get(p).rank() {
                    out.set(p, verdict);
                }
            }
        }
        out
    }

    fn sentence_verdicts(&self, tokens: &[String]) -> Vec<(Pathology, LabelValue)> {
        let uncertain = self
            .uncertainty
            .iter()
            .any(|cue| !occurrences(tokens, cue).is_empty());
        // (start, end) spans of negation cues
        let negations: Vec<(usize, usize)> = self
            .negation
            .iter()
            .flat_map(|cue| occurrences(tokens, cue).into_iter().map(move |s| (s, s + cue.len())))
            .collect();

        let mut verdicts: Vec<(Pathology, LabelValue)> = Vec::new();
        for p in Pathology::ALL {
            let starts: Vec<usize> = self
                .mentions
                .iter()
                .filter(|(q, _)| *q == p)
                .flat_map(|(_, phrase)| occurrences(tokens, phrase))
                .collect();
            if starts.is_empty() {
                continue;
            }
            let verdict = if uncertain {
                LabelValue::Uncertain
            } else if starts.iter().any(|&m| {
                negations
                    .iter()
                    .any(|&(s, e)| e <= m && m - s <= self.window)
            }) {
                LabelValue::Negative
            } else {
                LabelValue::Positive
            };
            verdicts.push((p, verdict));
        }
        verdicts
    }
}

/// Labels one report with `lexicon`. Total: every input yields a vector.
pub fn label_report(text: &str, lexicon: &Lexicon) -> Result<LabelVector> {
    Ok(Labeler::new(lexicon)?.label(text))
}
