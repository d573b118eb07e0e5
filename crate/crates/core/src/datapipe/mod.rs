//! Report labeling, study manifests, seeded splits, single-disease subsets
//! and synthetic corpora.

mod labeler;
mod labels;
mod records;
mod splits;
mod subset;
mod synth;

pub use labeler::{label_report, Labeler, Lexicon, DEFAULT_NEGATION_WINDOW};
pub use labels::{LabelValue, LabelVector, Pathology, UncertainPolicy, NUM_PATHOLOGIES};
pub use records::{
    filter_frontal, load_manifest, manifest_dir, read_manifest, save_manifest, write_manifest,
    StudyRecord, View,
};
pub use splits::{make_splits, records_hash, Split, SplitManifest, SplitRequest, SplitSize};
pub use subset::{build_single_disease_subset, is_single_disease, SubsetClass, SubsetManifest};
pub use synth::{synth_class, synth_mixed_manifest, synth_paired_dataset, SynthConfig};
