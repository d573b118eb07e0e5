//! Downstream heads: a linear probe over frozen global image features and
//! prompt-based zero-shot scoring.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crossmodal::{global_similarity, pair_local_score};
use crate::datapipe::{LabelVector, Pathology, UncertainPolicy, NUM_PATHOLOGIES};
use crate::encoders::{encode_texts, EncoderParams, LocalGlobalFeatures, TokenSequence};
use crate::error::{Error, Result};
use crate::numerics::{check_positive, dot, Tensor};
use crate::text::{tokenize, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub uncertain_policy: UncertainPolicy,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.5,
            uncertain_policy: UncertainPolicy::Exclude,
        }
    }
}

/// Five independent logistic regressions, one row of `weights` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    /// `[5, D]`
    #[serde(serialize_with = "rows_ser", deserialize_with = "rows_de")]
    pub weights: Tensor,
    pub bias: [f64; NUM_PATHOLOGIES],
    pub epochs: usize,
    pub learning_rate: f64,
    pub uncertain_policy: UncertainPolicy,
    /// Pathologies left untrained because their labels had a single class.
    pub skipped: Vec<Pathology>,
}

fn rows_ser<S: Serializer>(t: &Tensor, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<&[f64]> = (0..t.rows()).map(|r| t.row(r)).collect();
    rows.serialize(s)
}

fn rows_de<'de, D: Deserializer<'de>>(d: D) -> Result<Tensor, D::Error> {
    let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
    Tensor::from_rows(&rows).map_err(serde::de::Error::custom)
}

impl ProbeModel {
    pub fn zeros(dim: usize, config: &ProbeConfig) -> Result<Self> {
        Ok(Self {
            weights: Tensor::zeros(&[NUM_PATHOLOGIES, dim])?,
            bias: [0.0; NUM_PATHOLOGIES],
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            uncertain_policy: config.uncertain_policy,
            skipped: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.rows() != NUM_PATHOLOGIES {
            return Err(Error::Consistency(format!(
                "probe has {} outputs, expected {NUM_PATHOLOGIES}",
                self.weights.rows()
            )));
        }
        if !self.weights.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Consistency("probe parameters are not finite".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary targets per pathology; `None` entries are masked out.
fn targets(labels: &[LabelVector], p: Pathology, policy: UncertainPolicy) -> Vec<Option<bool>> {
    labels.iter().map(|l| l.get(p).binary(policy)).collect()
}

/// Sum over trained pathologies of the mean masked sigmoid cross-entropy.
pub fn probe_loss(model: &ProbeModel, features: &Tensor, labels: &[LabelVector]) -> Result<f64> {
    check_features(model, features, labels.len())?;
    let mut total = 0.0;
    for p in Pathology::ALL {
        if model.skipped.contains(&p) {
            continue;
        }
        let w = model.weights.row(p.index());
        let b = model.bias[p.index()];
        let (mut acc, mut n) = (0.0, 0usize);
        for (i, y) in targets(labels, p, model.uncertain_policy).into_iter().enumerate() {
            if let Some(y) = y {
                let z = dot(features.row(i), w) + b;
                acc += softplus(z) - if y { z } else { 0.0 };
                n += 1;
            }
        }
        if n > 0 {
            total += acc / n as f64;
        }
    }
    Ok(total)
}

fn check_features(model: &ProbeModel, features: &Tensor, n_labels: usize) -> Result<()> {
    if features.cols() != model.dim() {
        return Err(Error::dim("probe features", features.shape(), model.weights.shape()));
    }
    if features.rows() != n_labels {
        return Err(Error::dim("probe labels", &[features.rows()], &[n_labels]));
    }
    Ok(())
}

/// Full-batch gradient descent from zero weights.
pub fn fit_linear_probe(features: &Tensor, labels: &[LabelVector], config: &ProbeConfig) -> Result<ProbeModel> {
    fit_linear_probe_with(features, labels, config, |_, _| {})
}

/// As [`fit_linear_probe`], calling `on_epoch(epoch, loss)` with the loss
/// before each update and once more after the last.
pub fn fit_linear_probe_with(
    features: &Tensor,
    labels: &[LabelVector],
    config: &ProbeConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<ProbeModel> {
    check_positive("learning_rate", config.learning_rate)?;
    let n = features.rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut model = ProbeModel::zeros(features.cols(), config)?;
    check_features(&model, features, labels.len())?;

    let mut masks = Vec::with_capacity(NUM_PATHOLOGIES);
    for p in Pathology::ALL {
        let t = targets(labels, p, config.uncertain_policy);
        let pos = t.iter().filter(|y| **y == Some(true)).count();
        let neg = t.iter().filter(|y| **y == Some(false)).count();
        if pos == 0 || neg == 0 {
            log::warn!("skipping {p}: {pos} positive and {neg} negative labels");
            model.skipped.push(p);
        }
        masks.push(t);
    }

    let d = features.cols();
    for epoch in 0..=config.epochs {
        on_epoch(epoch, probe_loss(&model, features, labels)?);
        if epoch == config.epochs {
            break;
        }
        for p in Pathology::ALL {
            if model.skipped.contains(&p) {
                continue;
            }
            let k = p.index();
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            let mut count = 0usize;
            for (i, y) in masks[k].iter().enumerate() {
                let Some(y) = *y else { continue };
                let x = features.row(i);
                let err = sigmoid(dot(x, model.weights.row(k)) + model.bias[k]) - if y { 1.0 } else { 0.0 };
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += err * xi;
                }
                gb += err;
                count += 1;
            }
            let step = config.learning_rate / count as f64;
            let row = &mut model.weights.data_mut()[k * d..(k + 1) * d];
            for (w, g) in row.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            model.bias[k] -= step * gb;
        }
    }
    model.validate()?;
    Ok(model)
}

/// `[M, 5]` probabilities `sigmoid(x Wᵀ + b)`.
pub fn probe_predict(model: &ProbeModel, features: &Tensor) -> Result<Tensor> {
    if features.cols() != model.dim() {
        return Err(Error::dim("probe_predict", features.shape(), model.weights.shape()));
    }
    let logits = features.matmul(&model.weights.transpose())?;
    let m = features.rows();
    let mut data = logits.into_data();
    for (j, v) in data.iter_mut().enumerate() {
        *v = sigmoid(*v + model.bias[j % NUM_PATHOLOGIES]);
    }
    Tensor::matrix(m, NUM_PATHOLOGIES, data)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn classify_argmax(scores: &Tensor) -> Vec<usize> {
    (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Text prompts per pathology. Prompts that tokenize identically are kept
/// once, so repeating a prompt never changes a class score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    prompts: [Vec<String>; NUM_PATHOLOGIES],
}

impl PromptSet {
    pub fn new(map: BTreeMap<Pathology, Vec<String>>) -> Result<Self> {
        let mut prompts: [Vec<String>; NUM_PATHOLOGIES] = Default::default();
        for p in Pathology::ALL {
            let list = map
                .get(&p)
                .ok_or_else(|| Error::Contract(format!("prompt set has no prompts for {p}")))?;
            let mut seen = Vec::new();
            for text in list {
                let tokens = tokenize(text);
                if tokens.is_empty() {
                    return Err(Error::Contract(format!("empty prompt for {p}")));
                }
                if !seen.contains(&tokens) {
                    seen.push(tokens);
                    prompts[p.index()].push(text.clone());
                }
            }
            if prompts[p.index()].is_empty() {
                return Err(Error::Contract(format!("prompt set has no prompts for {p}")));
            }
        }
        Ok(Self { prompts })
    }

    /// `"{name}"`, `"findings consistent with {name}"` and `"evidence of {name}"`.
    pub fn default_templates() -> Self {
        let map = Pathology::ALL
            .iter()
            .map(|p| {
                let name = p.name();
                (
                    *p,
                    vec![
                        name.to_string(),
                        format!("findings consistent with {name}"),
                        format!("evidence of {name}"),
                    ],
                )
            })
            .collect();
        Self::new(map).expect("templates are valid")
    }

    /// JSON object mapping pathology keys or names to prompt lists.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, p: Pathology) -> &[String] {
        &self.prompts[p.index()]
    }

    /// Tokenizes every prompt; a word outside `vocab` is an error naming the
    /// prompt.
    pub fn encode(&self, vocab: &Vocabulary, max_length: usize) -> Result<Vec<Vec<TokenSequence>>> {
        self.prompts
            .iter()
            .map(|list| list.iter().map(|t| vocab.encode_strict(t, max_length)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroShotConfig {
    /// Weight of the global similarity; the local score gets the rest.
    pub global_weight: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for ZeroShotConfig {
    fn default() -> Self {
        Self {
            global_weight: 0.5,
            lambda1: 4.0,
            lambda2: 5.0,
        }
    }
}

impl ZeroShotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.global_weight) {
            return Err(Error::Parameter {
                name: "global_weight",
                value: self.global_weight,
                reason: "must lie in [0, 1]",
            });
        }
        check_positive("lambda1", self.lambda1)?;
        check_positive("lambda2", self.lambda2)
    }
}

/// `w · global + (1 - w) · local` similarity of an image and a text.
pub fn mixed_score(image: &LocalGlobalFeatures, text: &LocalGlobalFeatures, cfg: &ZeroShotConfig) -> Result<f64> {
    let w = cfg.global_weight;
    let mut s = 0.0;
    if w > 0.0 {
        s += w * global_similarity(&image.global, &text.global)?;
    }
    if w < 1.0 {
        s += (1.0 - w) * pair_local_score(image, text, cfg.lambda1, cfg.lambda2)?;
    }
    Ok(s)
}

/// `[M, 5]` class scores: mean mixed score over each class's prompts.
pub fn zero_shot_scores_from_features(
    images: &[LocalGlobalFeatures],
    prompts: &[Vec<LocalGlobalFeatures>],
    cfg: &ZeroShotConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Empty("images"));
    }
    if prompts.len() != NUM_PATHOLOGIES || prompts.iter().any(Vec::is_empty) {
        return Err(Error::Contract(format!(
            "need at least one prompt for each of the {NUM_PATHOLOGIES} pathologies"
        )));
    }
    let mut data = Vec::with_capacity(images.len() * NUM_PATHOLOGIES);
    for img in images {
        for class in prompts {
            let mut acc = 0.0;
            for text in class {
                acc += mixed_score(img, text, cfg)?;
            }
            data.push(acc / class.len() as f64);
        }
    }
    Tensor::matrix(images.len(), NUM_PATHOLOGIES, data)
}

/// Encodes the prompts with the trained text encoder and scores images.
pub fn zero_shot_scores(
    images: &[LocalGlobalFeatures],
    prompts: &PromptSet,
    params: &EncoderParams,
    vocab: &Vocabulary,
    cfg: &ZeroShotConfig,
) -> Result<Tensor> {
    let encoded = prompts.encode(vocab, params.config.max_length)?;
    let features = encoded
        .iter()
        .map(|seqs| encode_texts(&seqs.iter().collect::<Vec<_>>(), params))
        .collect::<Result<Vec<_>>>()?;
    zero_shot_scores_from_features(images, &features, cfg)
}
