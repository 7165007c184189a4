//! Samples, the dataset container, fold splitting and synthetic data.

pub mod folds;
pub mod format;
pub mod sample;
pub mod synthetic;
pub mod weights;

pub use folds::{stratified_kfold, FoldSplit};
pub use format::{load_dataset, manifest_sidecar, read_dataset, save_dataset, write_dataset};
pub use sample::{
    binarize, Dataset, DatasetManifest, Direction, EmbeddingSequence, Features, LabelSpace, Metadata, PenaltySample,
    Phase, Side,
};
pub use synthetic::{generate_synthetic, LabelPrior, SyntheticConfig};
pub use weights::compute_class_weights;
