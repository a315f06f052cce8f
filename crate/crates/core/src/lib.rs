//! Compact multiresolution hash-grid encoding with learned index probing,
//! applied to neural image compression.
//!
//! The pipeline: [`GridEncoding`] maps a point in `[0, 1]^d` to concatenated
//! per-level features, a small MLP decodes them to RGB, [`Trainer`] fits both
//! to an image, and [`CompactModel`] is the half-precision artifact written
//! to and read from `.cngp` files.

pub mod codebook;
pub mod config;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod grid;
pub mod image;
pub mod mlp;
pub mod model_io;
pub mod real;
pub mod trainer;

pub use codebook::{
    bake, infer_lookup, probe_backward, probe_forward, BakedIndexCodebook, ConfidenceCodebook,
    FeatureCodebook, ProbeTrace,
};
pub use config::{HyperParams, RGB};
pub use encoding::{EncodedVector, EncodingConfig, GridEncoding, HashLookup};
pub use error::{Error, Result};
pub use eval::{pareto_front, psnr, sweep, SweepGrid, SweepPoint};
pub use grid::{
    compose_probed_index, dense_index, enclosing_corners, level_resolution, spatial_hash,
    HashPrimes, IndexMode, LevelSpec, Vertex,
};
pub use image::{load_image, save_image, Image};
pub use mlp::{mlp_backward, mlp_forward, mlp_init, MlpParams, OutputActivation};
pub use model_io::{deserialize, read_header, serialize, size_report, CompactModel, ModelHeader, SizeReport};
pub use real::Real;
pub use trainer::{fit, select_hyperparams, FitOutput, Model, Precision, TrainConfig, Trainer};
