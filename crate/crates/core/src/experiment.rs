//! End-to-end synthetic experiment: generate paired studies, train, then
//! evaluate zero-shot classification, cross-modal retrieval and a linear
//! probe on held-out studies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{
    classify_argmax, fit_linear_probe, mixed_score, probe_predict, zero_shot_scores, ProbeConfig,
    ProbeModel, PromptSet, ZeroShotConfig,
};
use crate::datapipe::{synth_class, synth_paired_dataset, LabelVector, StudyRecord, SynthConfig, UncertainPolicy, NUM_PATHOLOGIES};
use crate::encoders::{encode_texts, image_patches, EncoderParams, LocalGlobalFeatures, ImageBatch};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::report::{per_class_auc, RunReport};
use crate::text::Vocabulary;
use crate::trainer::{train, Checkpoint, TrainConfig, TrainLogEntry, TrainingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Drives data generation and training.
    pub seed: u64,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub zero_shot: ZeroShotConfig,
}

impl ExperimentConfig {
    /// Training config with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Encodes record images in batches of 64.
pub fn encode_record_images(
    records: &[StudyRecord],
    base_dir: &Path,
    params: &EncoderParams,
) -> Result<Vec<LocalGlobalFeatures>> {
    let cfg = &params.config;
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(64) {
        let patches = chunk
            .iter()
            .map(|r| image_patches(&r.load_image(base_dir, cfg.grid_rows, cfg.grid_cols)?, cfg))
            .collect::<Result<Vec<_>>>()?;
        let batch = ImageBatch::from_patches(&patches.iter().collect::<Vec<_>>())?;
        out.extend(crate::encoders::encode_image_batch(&batch, params)?);
    }
    Ok(out)
}

/// Encodes report texts, mapping unknown words to the unknown token.
pub fn encode_record_texts(
    records: &[StudyRecord],
    params: &EncoderParams,
    vocab: &Vocabulary,
) -> Result<Vec<LocalGlobalFeatures>> {
    let seqs: Vec<_> = records
        .iter()
        .map(|r| vocab.encode_lossy(&r.report, params.config.max_length))
        .collect();
    let mut out = Vec::with_capacity(records.len());
    for chunk in seqs.chunks(64) {
        out.extend(encode_texts(&chunk.iter().collect::<Vec<_>>(), params)?);
    }
    Ok(out)
}

/// Stacks global vectors into `[N, D]`.
pub fn global_matrix(features: &[LocalGlobalFeatures]) -> Result<Tensor> {
    let first = features.first().ok_or(Error::Empty("features"))?;
    let d = first.dim();
    let mut data = Vec::with_capacity(features.len() * d);
    for f in features {
        if f.dim() != d {
            return Err(Error::dim("global features", first.global.shape(), f.global.shape()));
        }
        data.extend_from_slice(f.global.data());
    }
    Tensor::matrix(features.len(), d, data)
}

/// `[images, texts]` mixed similarity scores.
pub fn retrieval_scores(
    images: &[LocalGlobalFeatures],
    texts: &[LocalGlobalFeatures],
    cfg: &ZeroShotConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let mut data = Vec::with_capacity(images.len() * texts.len());
    for im in images {
        for tx in texts {
            data.push(mixed_score(im, tx, cfg)?);
        }
    }
    Tensor::matrix(images.len(), texts.len(), data)
}

/// Image-to-report retrieval accuracy at rank one: `(class-level,
/// exact-pair)`. A class-level hit retrieves any report of the query's
/// class; an exact hit retrieves the query's own report.
pub fn retrieval_top1(scores: &Tensor, classes: &[usize]) -> Result<(f64, f64)> {
    let (m, n) = scores.dims();
    if m != n || m != classes.len() {
        return Err(Error::dim("retrieval", scores.shape(), &[classes.len(), classes.len()]));
    }
    let best = classify_argmax(scores);
    let class_hits = best.iter().enumerate().filter(|(i, &j)| classes[*i] == classes[j]).count();
    let exact_hits = best.iter().enumerate().filter(|(i, &j)| *i == j).count();
    Ok((class_hits as f64 / m as f64, exact_hits as f64 / m as f64))
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogEntry>,
    pub zero_shot_scores: Tensor,
    pub zero_shot_aucs: [Option<f64>; NUM_PATHOLOGIES],
    pub retrieval_top1: f64,
    pub retrieval_exact_top1: f64,
    pub probe: ProbeModel,
    pub probe_aucs: [Option<f64>; NUM_PATHOLOGIES],
}

impl ExperimentResult {
    /// Zero-shot AUCs as the headline numbers; retrieval, probe and loss
    /// figures under `metrics`.
    pub fn report(&self) -> RunReport {
        let mut r = RunReport::new("experiment");
        r.config_hash = Some(self.checkpoint.config_hash.clone());
        r.seed = Some(self.checkpoint.config.seed);
        r.set_aucs(&self.zero_shot_aucs);
        r.metrics.insert("retrieval_top1".into(), self.retrieval_top1);
        r.metrics.insert("retrieval_exact_top1".into(), self.retrieval_exact_top1);
        let probe: Vec<f64> = self.probe_aucs.iter().flatten().copied().collect();
        if let Ok(s) = crate::metrics::aggregate_auc(&probe) {
            r.metrics.insert("probe_mean_auc".into(), s.mean);
        }
        if let (Some(first), Some(last)) = (self.log.first(), self.log.last()) {
            r.metrics.insert("initial_loss".into(), first.loss.total);
            r.metrics.insert("final_loss".into(), last.loss.total);
        }
        r
    }
}

fn labels(records: &[StudyRecord]) -> Vec<LabelVector> {
    records.iter().map(|r| r.labels).collect()
}

/// Runs the whole synthetic pipeline from a config.
pub fn run_synthetic_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let (train_recs, test_recs) = synth_paired_dataset(&cfg.synth, cfg.seed)?;
    if test_recs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let train_cfg = cfg.train_config();
    let data = TrainingSet::from_records(&train_recs, Path::new("."), &train_cfg.encoder, None)?;
    let outcome = train(&data, &train_cfg)?;
    let params = &outcome.checkpoint.params;
    let vocab = &outcome.checkpoint.vocab;

    let test_images = encode_record_images(&test_recs, Path::new("."), params)?;
    let test_labels = labels(&test_recs);
    let zs = zero_shot_scores(&test_images, &PromptSet::default_templates(), params, vocab, &cfg.zero_shot)?;
    let zero_shot_aucs = per_class_auc(&zs, &test_labels, UncertainPolicy::Exclude)?;

    let test_texts = encode_record_texts(&test_recs, params, vocab)?;
    let classes: Vec<usize> = test_recs
        .iter()
        .map(|r| synth_class(r).ok_or_else(|| Error::Consistency(format!("study {} has no single class", r.study_id))))
        .collect::<Result<_>>()?;
    let (retrieval_top1, retrieval_exact_top1) =
        retrieval_top1(&retrieval_scores(&test_images, &test_texts, &cfg.zero_shot)?, &classes)?;

    let train_images = encode_record_images(&train_recs, Path::new("."), params)?;
    let probe = fit_linear_probe(&global_matrix(&train_images)?, &labels(&train_recs), &cfg.probe)?;
    let probs = probe_predict(&probe, &global_matrix(&test_images)?)?;
    let probe_aucs = per_class_auc(&probs, &test_labels, cfg.probe.uncertain_policy)?;

    Ok(ExperimentResult {
        checkpoint: outcome.checkpoint,
        log: outcome.log,
        zero_shot_scores: zs,
        zero_shot_aucs,
        retrieval_top1,
        retrieval_exact_top1,
        probe,
        probe_aucs,
    })
}
