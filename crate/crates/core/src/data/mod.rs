//! Datasets, file formats, checkpoints and metrics.

pub mod dataset;

pub use dataset::{to_network, LabeledDataset, Split};
pub mod synth;
pub use synth::{synth_shapes, SynthParams};
pub mod tensor_file;
pub use tensor_file::{read_tensor, write_tensor, DType};
pub mod cifar;
pub use cifar::{grayscale, load_cifar10, parse_cifar10};
pub mod store;
pub use store::{load_dataset, load_manifest, load_videos, save_dataset, save_videos, DatasetManifest};
pub mod checkpoint;
pub use checkpoint::{load_checkpoint, model_digest, save_checkpoint, sha256_hex};
pub mod metrics;
pub use metrics::{read_jsonl, MetricsLog};
pub mod pgm;
pub use pgm::{normalized, tile, to_u8, write_pnm};
