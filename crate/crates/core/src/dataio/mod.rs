//! Embedding dataset container, stratified k-fold splitting, and synthetic data.

mod container;
mod kfold;
mod synth;

pub use container::{
    load, save, Dataset, DatasetManifest, SampleRecord, EMBEDDINGS_FILE, FORMAT_VERSION,
    LABELS_FILE, MANIFEST_FILE,
};
pub use kfold::{split_kfold, FoldSplit};
pub use synth::{gen_out_of_distribution, gen_synthetic, SyntheticSpec, MAX_TOKENS, MIN_TOKENS};
