//! Deterministic mini-batch training of the encoders under the total
//! cross-modal loss.
//!
//! A single ChaCha8 stream seeded from `TrainConfig::seed` first draws the
//! initial parameters and then every epoch shuffle. The stream position, the
//! current epoch order and the optimizer moments all live in the
//! [`Checkpoint`], so resuming reproduces an uninterrupted run bit for bit.

mod adam;
mod checkpoint;

pub use adam::{optimizer_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossmodal::{total_loss_graph, LossBreakdown, LossConfig};
use crate::datapipe::StudyRecord;
use crate::encoders::{
    encode_image_graph, encode_text_graph, image_patches, EncoderConfig, EncoderParams, EncoderVars,
    ImageBatch, TextBatch, TokenSequence, PARAM_NAMES,
};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};
use crate::text::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 16,
            steps: 500,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
            loss: LossConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Contract("batch size must be at least 1".into()));
        }
        self.adam().validate()?;
        self.loss.validate()?;
        self.encoder.validate()
    }
}

/// SHA-256 of the config JSON with `steps` zeroed, so that extending a run
/// keeps the hash.
pub fn config_hash(config: &TrainConfig) -> Result<String> {
    let mut c = config.clone();
    c.steps = 0;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&c)?)))
}

/// Epoch-shuffled batch sampler. A tail shorter than two items is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sampler {
    pub order: Vec<usize>,
    pub cursor: usize,
    batch_size: usize,
}

impl Sampler {
    pub fn new(batch_size: usize) -> Self {
        Self {
            order: Vec::new(),
            cursor: 0,
            batch_size,
        }
    }

    pub(crate) fn restore(order: Vec<usize>, cursor: usize, batch_size: usize) -> Self {
        Self {
            order,
            cursor,
            batch_size,
        }
    }

    pub fn next_batch(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let min_batch = self.batch_size.min(2);
        if self.order.len() != n || n - self.cursor < min_batch {
            self.order = (0..n).collect();
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let take = self.batch_size.min(n - self.cursor);
        let batch = self.order[self.cursor..self.cursor + take].to_vec();
        self.cursor += take;
        batch
    }
}

/// Pre-pooled image patches and token ids of paired studies.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub study_ids: Vec<String>,
    pub patches: Vec<Tensor>,
    pub tokens: Vec<TokenSequence>,
    pub vocab: Vocabulary,
}

impl TrainingSet {
    /// Builds the set from records; the vocabulary is derived from the
    /// reports unless one is given. Images come inline or from PGM files
    /// relative to `base_dir`.
    pub fn from_records(
        records: &[StudyRecord],
        base_dir: &Path,
        encoder: &EncoderConfig,
        vocab: Option<Vocabulary>,
    ) -> Result<Self> {
        let vocab =
            vocab.unwrap_or_else(|| Vocabulary::from_texts(records.iter().map(|r| r.report.as_str())));
        let mut set = TrainingSet {
            study_ids: Vec::with_capacity(records.len()),
            patches: Vec::with_capacity(records.len()),
            tokens: Vec::with_capacity(records.len()),
            vocab,
        };
        for rec in records {
            if crate::text::tokenize(&rec.report).is_empty() {
                return Err(Error::MissingModality {
                    study_id: rec.study_id.clone(),
                    modality: "report",
                });
            }
            let img = rec.load_image(base_dir, encoder.grid_rows, encoder.grid_cols)?;
            set.patches.push(image_patches(&img, encoder)?);
            set.tokens.push(set.vocab.encode_lossy(&rec.report, encoder.max_length));
            set.study_ids.push(rec.study_id.clone());
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.study_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.study_ids.is_empty()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: u64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    config_hash: String,
    params: EncoderParams,
    adam: AdamState,
    sampler: Sampler,
    rng: ChaCha8Rng,
    step: u64,
    vocab: Vocabulary,
}

impl Trainer {
    /// Fresh trainer; an `encoder.vocab_size` of 0 is filled in from the
    /// data vocabulary.
    pub fn new(mut config: TrainConfig, data: &TrainingSet) -> Result<Self> {
        if config.encoder.vocab_size == 0 {
            config.encoder.vocab_size = data.vocab.len();
        }
        config.validate()?;
        check_data(&config, data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = EncoderParams::init(config.encoder.clone(), &mut rng)?;
        Ok(Self {
            config_hash: config_hash(&config)?,
            sampler: Sampler::new(config.batch_size),
            config,
            params,
            adam: AdamState::default(),
            rng,
            step: 0,
            vocab: data.vocab.clone(),
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, data: &TrainingSet) -> Result<Self> {
        if ckpt.vocab != data.vocab {
            return Err(Error::Consistency(
                "training data vocabulary differs from the checkpoint vocabulary".into(),
            ));
        }
        check_data(&ckpt.config, data)?;
        if !ckpt.sampler.order.is_empty() && ckpt.sampler.order.len() != data.len() {
            return Err(Error::Consistency(format!(
                "checkpoint was trained on {} studies, data has {}",
                ckpt.sampler.order.len(),
                data.len()
            )));
        }
        Ok(Self {
            rng: ckpt.rng.restore(),
            config: ckpt.config,
            config_hash: ckpt.config_hash,
            params: ckpt.params,
            adam: ckpt.adam,
            sampler: ckpt.sampler,
            step: ckpt.step,
            vocab: ckpt.vocab,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Loss of a batch under the current parameters, without updating.
    pub fn evaluate(&self, data: &TrainingSet, indices: &[usize]) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let vars = EncoderVars::register(&mut tape, &self.params, false);
        let loss = record_loss(&mut tape, &vars, &self.config, data, indices)?;
        loss.breakdown(&tape, &self.config.loss)
    }

    /// One optimization step; returns the loss before the update.
    pub fn step(&mut self, data: &TrainingSet) -> Result<LossBreakdown> {
        let batch = self.sampler.next_batch(data.len(), &mut self.rng);
        let mut tape = Tape::new();
        let vars = EncoderVars::register(&mut tape, &self.params, true);
        let loss = record_loss(&mut tape, &vars, &self.config, data, &batch)?;
        let breakdown = loss.breakdown(&tape, &self.config.loss)?;
        tape.backward(loss.total)?;
        let grads: Vec<&Tensor> = vars
            .all()
            .iter()
            .map(|&v| tape.grad(v).ok_or_else(|| Error::TapeState("missing parameter gradient".into())))
            .collect::<Result<_>>()?;
        let mut params = self.params.tensors_mut();
        optimizer_step(&mut params, &grads, &PARAM_NAMES, &mut self.adam, &self.config.adam())?;
        self.step += 1;
        Ok(breakdown)
    }

    /// Steps until `config.steps`, handing every log entry to `log`.
    pub fn run(
        &mut self,
        data: &TrainingSet,
        mut log: impl FnMut(&TrainLogEntry) -> Result<()>,
    ) -> Result<()> {
        while self.step < self.config.steps {
            let loss = self.step(data)?;
            log(&TrainLogEntry {
                step: self.step,
                loss,
            })?;
        }
        Ok(())
    }

    /// Raises the step budget; the config hash ignores `steps`.
    pub fn extend_to(&mut self, steps: u64) {
        self.config.steps = steps;
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            step: self.step,
            rng: RngState::capture(&self.rng),
            sampler: self.sampler.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
        }
    }
}

fn check_data(config: &TrainConfig, data: &TrainingSet) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: data.len(),
        });
    }
    if config.encoder.vocab_size != data.vocab.len() {
        return Err(Error::Consistency(format!(
            "encoder vocabulary size {} differs from data vocabulary size {}",
            config.encoder.vocab_size,
            data.vocab.len()
        )));
    }
    Ok(())
}

fn record_loss(
    tape: &mut Tape,
    vars: &EncoderVars,
    config: &TrainConfig,
    data: &TrainingSet,
    indices: &[usize],
) -> Result<crate::crossmodal::LossVars> {
    let patches: Vec<&Tensor> = indices.iter().map(|&i| &data.patches[i]).collect();
    let seqs: Vec<&TokenSequence> = indices.iter().map(|&i| &data.tokens[i]).collect();
    let images = ImageBatch::from_patches(&patches)?;
    let texts = TextBatch::new(&seqs, &config.encoder)?;
    let img = encode_image_graph(tape, vars, &images)?;
    let txt = encode_text_graph(tape, vars, &texts)?;
    total_loss_graph(tape, img, images.regions, txt, &texts.offsets, &config.loss)
}

/// Result of [`train`]: the final checkpoint and the per-step log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogEntry>,
}

/// Trains from scratch for `config.steps` steps.
pub fn train(data: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), data)?;
    let mut log = Vec::with_capacity(config.steps as usize);
    trainer.run(data, |e| {
        log.push(*e);
        Ok(())
    })?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        log,
    })
}

/// Continues a checkpoint until `steps` total steps.
pub fn resume(ckpt: Checkpoint, data: &TrainingSet, steps: u64) -> Result<TrainOutcome> {
    let mut trainer = Trainer::from_checkpoint(ckpt, data)?;
    trainer.extend_to(steps);
    let mut log = Vec::new();
    trainer.run(data, |e| {
        log.push(*e);
        Ok(())
    })?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        log,
    })
}

/// Writes log entries as JSON lines.
pub fn write_train_log<W: Write>(entries: &[TrainLogEntry], mut out: W) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
