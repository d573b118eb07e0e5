//! Fixtures shared by the criterion benchmarks.

use std::path::Path;

use glore_core::datapipe::{synth_mixed_manifest, synth_paired_dataset, SynthConfig};
use glore_core::experiment::{encode_record_images, encode_record_texts};
use glore_core::trainer::{TrainingSet, Trainer};
use glore_core::{LocalGlobalFeatures, StudyRecord, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).expect("matrix shape")
}

/// Scores with ties and a roughly balanced label split.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let y = rng.gen_bool(0.4);
            let shift = if y { 0.3 } else { 0.0 };
            let s = ((rng.gen_range(0.0..1.0) + shift) * 100.0_f64).round() / 100.0;
            (s, y)
        })
        .unzip()
}

pub fn reports(n: usize, seed: u64) -> Vec<String> {
    synth_mixed_manifest(n, n, seed)
        .expect("mixed manifest")
        .into_iter()
        .map(|r| r.report)
        .collect()
}

/// Trainer on the default synthetic training set, plus held-out records.
pub fn trainer(batch_size: usize) -> (Trainer, TrainingSet, Vec<StudyRecord>) {
    let (train, test) = synth_paired_dataset(&SynthConfig::default(), 0).expect("synthetic data");
    let config = TrainConfig {
        batch_size,
        ..TrainConfig::default()
    };
    let data = TrainingSet::from_records(&train, Path::new("."), &config.encoder, None).expect("training set");
    let trainer = Trainer::new(config, &data).expect("trainer");
    (trainer, data, test)
}

/// Encoded image and report features for the first `n` held-out studies.
pub fn paired_features(n: usize) -> (Vec<LocalGlobalFeatures>, Vec<LocalGlobalFeatures>) {
    let (trainer, data, test) = trainer(16);
    let records = &test[..n.min(test.len())];
    let images = encode_record_images(records, Path::new("."), trainer.params()).expect("images");
    let texts = encode_record_texts(records, trainer.params(), &data.vocab).expect("texts");
    (images, texts)
}
