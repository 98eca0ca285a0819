//! Configurable residual classifier.

mod arch;
mod checkpoint;
mod model;

pub use arch::{count_params, ArchSpec};
pub use checkpoint::{
    checkpoint_path, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, BlobInfo, CheckpointHeader,
};
pub use model::{predict_usable, Model, Structure};
