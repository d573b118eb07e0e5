//! Global and local cross-modal representation learning for paired chest
//! images and radiology reports, with zero-shot and linear-probe
//! evaluation.
//!
//! The crate is self-contained: a small dense-tensor autodiff engine
//! ([`numerics`]), toy image and text encoders ([`encoders`]), the
//! attention-based cross-modal objective ([`crossmodal`]), a deterministic
//! trainer ([`trainer`]), downstream heads ([`classify`]), ROC/AUC
//! ([`metrics`]) and the data pipeline ([`datapipe`]).

mod binio;
pub mod classify;
pub mod crossmodal;
pub mod datapipe;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod numerics;
pub mod report;
pub mod text;
pub mod trainer;

pub use classify::{
    classify_argmax, fit_linear_probe, probe_predict, zero_shot_scores, ProbeConfig, ProbeModel,
    PromptSet, ZeroShotConfig,
};
pub use crossmodal::{contrastive_loss_batch, total_loss, Direction, LossBreakdown, LossConfig};
pub use datapipe::{
    label_report, LabelValue, LabelVector, Lexicon, Pathology, StudyRecord, UncertainPolicy, View,
};
pub use encoders::{EncoderConfig, EncoderParams, ImageGrid, LocalGlobalFeatures, Modality, TokenSequence};
pub use error::{Error, Result};
pub use metrics::{aggregate_auc, roc_auc, RocCurve};
pub use numerics::{Tape, Tensor, Var};
pub use report::RunReport;
pub use text::Vocabulary;
pub use trainer::{Checkpoint, TrainConfig};
