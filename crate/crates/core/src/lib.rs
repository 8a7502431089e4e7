//! Content-based image retrieval built on the fractional local neighborhood
//! intensity pattern (FLNIP) texture descriptor.
//!
//! The pipeline is:
//!
//! 1. decode a grayscale raster ([`pixelgrid`]),
//! 2. filter it at several Gaussian scales ([`gaussian`]),
//! 3. code every interior pixel of the raw and filtered images with FLNIP and
//!    histogram the codes ([`patterns`]), giving a 1024-long feature,
//! 4. compare features block by block ([`metrics`]) and fuse the per-scale
//!    distances with weights learned by a genetic algorithm ([`evolver`]),
//! 5. rank, evaluate and persist ([`retrieval`]); corpora come from
//!    [`datasets`].

pub mod datasets;
pub mod error;
pub mod evolver;
pub mod gaussian;
pub mod metrics;
pub mod patterns;
pub mod pixelgrid;
pub mod retrieval;

mod decimal;

pub use datasets::{CorpusSpec, Labeling, LabeledImage, LoadedCorpus, SynthSpec};
pub use error::{Error, Result};
pub use evolver::{DistanceTensor, Evolution, GaConfig, TopK, WeightChromosome};
pub use gaussian::{GaussianKernel, ScaleBank};
pub use metrics::{MetricId, WeightVector};
pub use patterns::{Coder, DescriptorHistogram, FeatureRecord, PatternMap};
pub use pixelgrid::GrayImage;
pub use retrieval::{EvalOptions, EvalReport, FeatureDatabase, QueryResult};

pub use decimal::format_sig9;

/// Number of histogram bins per descriptor block.
pub const BINS: usize = 256;

/// Number of blocks in a canonical feature record (raw image plus three scales).
pub const BLOCKS: usize = 4;

/// Length of a canonical feature record.
pub const FEATURE_LEN: usize = BINS * BLOCKS;
