//! Datasets, optimization, training, evaluation and file formats.

mod data;
mod eval;
mod io;
mod optim;
mod phantom;
mod train;

pub use data::{build_samples, load_image_dir, make_training_pair, split_indices, DatasetSource, Sample};
pub use eval::{evaluate, evaluate_with, median_of, MEDIAN_ID};
pub use io::{export_magnitude, load_field, magnitude_levels, read_field, save_field, write_field, BitDepth, ExportFormat};
pub use optim::{adam_update, Adam, AdamConfig};
pub use phantom::{generate_phantoms, phantom, phantom_pixels, PhantomSpec};
pub use train::{mean_loss, train, train_on_samples, write_history, EpochRecord, RunFiles, TrainConfig, TrainOutcome};
