//! Word-to-region attention, local alignment scores and the symmetric
//! global + local contrastive objective.
//!
//! For an image with unit region rows `V` (`R × D`) and a text with unit
//! word rows `W` (`T × D`):
//!
//! * similarity `S = W Vᵀ`;
//! * attention `A = softmax_rows(λ1 · S)`, contexts `C = A V`;
//! * local score `Z = (1/λ2) · log Σ_t exp(λ2 · cos(C_t, W_t))`;
//! * global score is the cosine of the two global vectors.
//!
//! A batch yields two `B × B` matrices (image `i` against text `j`) and each
//! is scored with image→text and text→image InfoNCE at its temperature.
//!
//! Every operation exists twice: a plain evaluation over [`Tensor`]s used
//! for inference, and a tape-recorded version used for training. The
//! batched tape version computes the local matrix for all `(i, j)` pairs at
//! once; it is checked against the per-pair plain evaluation in tests.

use serde::{Deserialize, Serialize};

use crate::encoders::{EncodedBatch, LocalGlobalFeatures};
use crate::error::{Error, Result};
use crate::numerics::{check_positive, cosine, dot, logsumexp, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub global_i2t: f64,
    pub global_t2i: f64,
    pub local_i2t: f64,
    pub local_t2i: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            global_i2t: 1.0,
            global_t2i: 1.0,
            local_i2t: 1.0,
            local_t2i: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Attention sharpening.
    pub lambda1: f64,
    /// Word aggregation sharpening.
    pub lambda2: f64,
    pub tau_global: f64,
    pub tau_local: f64,
    pub weights: LossWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 4.0,
            lambda2: 5.0,
            tau_global: 0.1,
            tau_local: 0.1,
            weights: LossWeights::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("lambda1", self.lambda1)?;
        check_positive("lambda2", self.lambda2)?;
        check_positive("tau_global", self.tau_global)?;
        check_positive("tau_local", self.tau_local)?;
        let w = &self.weights;
        for (name, v) in [
            ("weights.global_i2t", w.global_i2t),
            ("weights.global_t2i", w.global_t2i),
            ("weights.local_i2t", w.local_i2t),
            ("weights.local_t2i", w.local_t2i),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter {
                    name,
                    value: v,
                    reason: "must be finite and non-negative",
                });
            }
        }
        Ok(())
    }
}

/// Word × region cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    /// `[T, R]`
    pub values: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    /// `[T, R]`, rows sum to one.
    pub weights: Tensor,
    /// `[T, D]`, one context vector per word.
    pub contexts: Tensor,
    pub lambda1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub global_i2t: f64,
    pub global_t2i: f64,
    pub local_i2t: f64,
    pub local_t2i: f64,
    pub total: f64,
    pub tau_global: f64,
    pub tau_local: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Rows: posterior over texts given each image.
    ImageToText,
    /// Columns: posterior over images given each text.
    TextToImage,
}

pub fn similarity_matrix(words: &Tensor, regions: &Tensor) -> Result<SimilarityMatrix> {
    if words.cols() != regions.cols() {
        return Err(Error::dim("similarity_matrix", words.shape(), regions.shape()));
    }
    Ok(SimilarityMatrix {
        values: words.matmul(&regions.transpose())?,
    })
}

pub fn attention_contexts(
    sim: &SimilarityMatrix,
    regions: &Tensor,
    lambda1: f64,
) -> Result<AttentionMap> {
    check_positive("lambda1", lambda1)?;
    if sim.values.cols() != regions.rows() {
        return Err(Error::dim("attention_contexts", sim.values.shape(), regions.shape()));
    }
    let weights = sim.values.softmax_rows(lambda1)?;
    let contexts = weights.matmul(regions)?;
    Ok(AttentionMap {
        weights,
        contexts,
        lambda1,
    })
}

/// Smooth maximum over words of `cos(context_t, word_t)`.
pub fn local_alignment_score(att: &AttentionMap, words: &Tensor, lambda2: f64) -> Result<f64> {
    check_positive("lambda2", lambda2)?;
    if att.contexts.dims() != words.dims() {
        return Err(Error::dim("local_alignment_score", att.contexts.shape(), words.shape()));
    }
    let scaled: Vec<f64> = (0..words.rows())
        .map(|t| lambda2 * cosine(att.contexts.row(t), words.row(t)))
        .collect();
    Ok(logsumexp(&scaled) / lambda2)
}

/// Local score of one image against one text.
pub fn pair_local_score(
    image: &LocalGlobalFeatures,
    text: &LocalGlobalFeatures,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    let sim = similarity_matrix(&text.local, &image.local)?;
    let att = attention_contexts(&sim, &image.local, lambda1)?;
    local_alignment_score(&att, &text.local, lambda2)
}

/// Cosine of two unit global vectors (their dot product).
pub fn global_similarity(g_img: &Tensor, g_txt: &Tensor) -> Result<f64> {
    if g_img.numel() != g_txt.numel() {
        return Err(Error::dim("global_similarity", g_img.shape(), g_txt.shape()));
    }
    Ok(dot(g_img.data(), g_txt.data()))
}

pub fn contrastive_loss_batch(pairwise: &Tensor, tau: f64, direction: Direction) -> Result<f64> {
    check_positive("tau", tau)?;
    let (r, c) = pairwise.dims();
    if r != c {
        return Err(Error::dim("contrastive_loss_batch", pairwise.shape(), &[r, r]));
    }
    let oriented = match direction {
        Direction::ImageToText => pairwise.clone(),
        Direction::TextToImage => pairwise.transpose(),
    };
    let mut total = 0.0;
    for i in 0..r {
        let logits: Vec<f64> = oriented.row(i).iter().map(|v| v / tau).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tail: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        // written as (max - target) + ln Σ exp(l - max) so that uniform rows give ln B exactly
        total += (max - logits[i]) + tail.ln();
    }
    Ok(total / r as f64)
}

fn check_batch(images: &[LocalGlobalFeatures], texts: &[LocalGlobalFeatures]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if images.len() != texts.len() {
        return Err(Error::dim("batch", &[images.len()], &[texts.len()]));
    }
    Ok(())
}

/// `[B, B]` global similarities, image `i` against text `j`.
pub fn pairwise_global(
    images: &[LocalGlobalFeatures],
    texts: &[LocalGlobalFeatures],
) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * texts.len());
    for im in images {
        for tx in texts {
            data.push(global_similarity(&im.global, &tx.global)?);
        }
    }
    Tensor::matrix(images.len(), texts.len(), data)
}

/// `[B, B]` local scores, image `i` regions against text `j` words.
pub fn pairwise_local(
    images: &[LocalGlobalFeatures],
    texts: &[LocalGlobalFeatures],
    lambda1: f64,
    lambda2: f64,
) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * texts.len());
    for im in images {
        for tx in texts {
            data.push(pair_local_score(im, tx, lambda1, lambda2)?);
        }
    }
    Tensor::matrix(images.len(), texts.len(), data)
}

/// Sum of the four weighted directional losses over a paired batch.
pub fn total_loss(
    images: &[LocalGlobalFeatures],
    texts: &[LocalGlobalFeatures],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    check_batch(images, texts)?;
    let g = pairwise_global(images, texts)?;
    let l = pairwise_local(images, texts, cfg.lambda1, cfg.lambda2)?;
    let global_i2t = contrastive_loss_batch(&g, cfg.tau_global, Direction::ImageToText)?;
    let global_t2i = contrastive_loss_batch(&g, cfg.tau_global, Direction::TextToImage)?;
    let local_i2t = contrastive_loss_batch(&l, cfg.tau_local, Direction::ImageToText)?;
    let local_t2i = contrastive_loss_batch(&l, cfg.tau_local, Direction::TextToImage)?;
    let w = &cfg.weights;
    Ok(LossBreakdown {
        global_i2t,
        global_t2i,
        local_i2t,
        local_t2i,
        total: w.global_i2t * global_i2t
            + w.global_t2i * global_t2i
            + w.local_i2t * local_i2t
            + w.local_t2i * local_t2i,
        tau_global: cfg.tau_global,
        tau_local: cfg.tau_local,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
    })
}

// ---------------------------------------------------------------------------
// Tape-recorded versions

/// `[T, R]` similarity of word rows against region rows.
pub fn similarity_graph(tape: &mut Tape, words: Var, regions: Var) -> Result<Var> {
    let rt = tape.transpose(regions)?;
    tape.matmul(words, rt)
}

/// Returns `(weights, contexts)`.
pub fn attention_graph(
    tape: &mut Tape,
    sim: Var,
    regions: Var,
    lambda1: f64,
) -> Result<(Var, Var)> {
    let weights = tape.softmax_rows(sim, lambda1)?;
    let contexts = tape.matmul(weights, regions)?;
    Ok((weights, contexts))
}

/// `[1, 1]` local alignment score.
pub fn local_score_graph(tape: &mut Tape, contexts: Var, words: Var, lambda2: f64) -> Result<Var> {
    check_positive("lambda2", lambda2)?;
    let cos = tape.cosine_rows(contexts, words)?;
    let row = tape.transpose(cos)?;
    let scaled = tape.scale(row, lambda2)?;
    let lse = tape.logsumexp_rows(scaled)?;
    tape.scale(lse, 1.0 / lambda2)
}

pub fn contrastive_graph(tape: &mut Tape, pairwise: Var, tau: f64, direction: Direction) -> Result<Var> {
    check_positive("tau", tau)?;
    let (r, c) = tape.value(pairwise).dims();
    if r != c {
        return Err(Error::dim("contrastive_loss_batch", tape.value(pairwise).shape(), &[r, r]));
    }
    let oriented = match direction {
        Direction::ImageToText => pairwise,
        Direction::TextToImage => tape.transpose(pairwise)?,
    };
    let logits = tape.scale(oriented, 1.0 / tau)?;
    let lse = tape.logsumexp_rows(logits)?;
    let mean_lse = tape.mean(lse)?;
    let eye = tape.constant(Tensor::identity(r)?);
    let diag = tape.mul(logits, eye)?;
    let diag_sum = tape.sum(diag)?;
    let diag_mean = tape.scale(diag_sum, 1.0 / r as f64)?;
    tape.sub(mean_lse, diag_mean)
}

fn one_hot_row(n: usize, i: usize) -> Tensor {
    let mut data = vec![0.0; n];
    data[i] = 1.0;
    Tensor::from_parts_unchecked(vec![1, n], data)
}

/// Batched `[B, B]` local score matrix. `image_local` stacks `R` region rows
/// per image; `text_local` stacks word rows delimited by `text_offsets`.
pub fn pairwise_local_graph(
    tape: &mut Tape,
    image_local: Var,
    regions: usize,
    text_local: Var,
    text_offsets: &[usize],
    lambda1: f64,
    lambda2: f64,
) -> Result<Var> {
    check_positive("lambda1", lambda1)?;
    check_positive("lambda2", lambda2)?;
    let b = tape.value(image_local).rows() / regions;
    if text_offsets.len() != b + 1 {
        return Err(Error::dim("pairwise_local", &[b], &[text_offsets.len().saturating_sub(1)]));
    }

    // cos_matrix[t, i] = cos(context of word t under image i, word t)
    let mut cos_matrix: Option<Var> = None;
    for i in 0..b {
        let idx: Vec<usize> = (i * regions..(i + 1) * regions).collect();
        let v = tape.gather_rows(image_local, &idx)?;
        let sim = similarity_graph(tape, text_local, v)?;
        let (_, ctx) = attention_graph(tape, sim, v, lambda1)?;
        let cos = tape.cosine_rows(ctx, text_local)?;
        let e = tape.constant(one_hot_row(b, i));
        let placed = tape.matmul(cos, e)?;
        cos_matrix = Some(match cos_matrix {
            Some(acc) => tape.add(acc, placed)?,
            None => placed,
        });
    }
    let cos_matrix = cos_matrix.ok_or(Error::Empty("batch"))?;

    // column j holds λ2 · Z[i, j] for every image i
    let mut scores: Option<Var> = None;
    for j in 0..b {
        let idx: Vec<usize> = (text_offsets[j]..text_offsets[j + 1]).collect();
        let seg = tape.gather_rows(cos_matrix, &idx)?;
        let seg_t = tape.transpose(seg)?;
        let scaled = tape.scale(seg_t, lambda2)?;
        let lse = tape.logsumexp_rows(scaled)?;
        let e = tape.constant(one_hot_row(b, j));
        let placed = tape.matmul(lse, e)?;
        scores = Some(match scores {
            Some(acc) => tape.add(acc, placed)?,
            None => placed,
        });
    }
    let scores = scores.ok_or(Error::Empty("batch"))?;
    tape.scale(scores, 1.0 / lambda2)
}

/// Loss components recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub global_i2t: Var,
    pub global_t2i: Var,
    pub local_i2t: Var,
    pub local_t2i: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape, cfg: &LossConfig) -> Result<LossBreakdown> {
        Ok(LossBreakdown {
            global_i2t: tape.value(self.global_i2t).item()?,
            global_t2i: tape.value(self.global_t2i).item()?,
            local_i2t: tape.value(self.local_i2t).item()?,
            local_t2i: tape.value(self.local_t2i).item()?,
            total: tape.value(self.total).item()?,
            tau_global: cfg.tau_global,
            tau_local: cfg.tau_local,
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
        })
    }
}

pub fn total_loss_graph(
    tape: &mut Tape,
    images: EncodedBatch,
    regions: usize,
    texts: EncodedBatch,
    text_offsets: &[usize],
    cfg: &LossConfig,
) -> Result<LossVars> {
    cfg.validate()?;
    let txt_t = tape.transpose(texts.global)?;
    let global = tape.matmul(images.global, txt_t)?;
    let local = pairwise_local_graph(
        tape,
        images.local,
        regions,
        texts.local,
        text_offsets,
        cfg.lambda1,
        cfg.lambda2,
    )?;
    let global_i2t = contrastive_graph(tape, global, cfg.tau_global, Direction::ImageToText)?;
    let global_t2i = contrastive_graph(tape, global, cfg.tau_global, Direction::TextToImage)?;
    let local_i2t = contrastive_graph(tape, local, cfg.tau_local, Direction::ImageToText)?;
    let local_t2i = contrastive_graph(tape, local, cfg.tau_local, Direction::TextToImage)?;
    let w = &cfg.weights;
    let mut total: Option<Var> = None;
    for (v, weight) in [
        (global_i2t, w.global_i2t),
        (global_t2i, w.global_t2i),
        (local_i2t, w.local_i2t),
        (local_t2i, w.local_t2i),
    ] {
        let term = if weight == 1.0 { v } else { tape.scale(v, weight)? };
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok(LossVars {
        global_i2t,
        global_t2i,
        local_i2t,
        local_t2i,
        total: total.expect("four terms"),
    })
}
