//! VLAD-family encoding of dense local descriptors.
//!
//! The pipeline runs PCA whitening, a k-means dictionary, residual
//! aggregation under hard, soft, localized-soft or locality-constrained
//! (LLC) assignment, optional spatial-pyramid pooling, and a one-vs-rest
//! linear classifier. Numeric code is generic over [`Real`] (`f32`/`f64`);
//! the aliases below fix it to `f64`, which is what the CLI uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod classifier;
pub mod codebook;
pub mod encoder;
pub mod error;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod spm;
pub mod synth;
pub mod vlad;

pub use assignment::{AssignConfig, AssignMode, AssignmentWeights};
pub use classifier::{EvalReport, TrainHyper};
pub use error::{Error, Result};
pub use io::{DatasetManifest, FeatureMap, ManifestEntry};
pub use pipeline::{BenchReport, PipelineConfig};
pub use scalar::Real;
pub use spm::PyramidSpec;
pub use synth::{SynthMode, SynthSpec};
pub use vlad::{EncoderConfig, NormScheme};

pub type Dictionary = codebook::Dictionary<f64>;
pub type WhiteningTransform = preprocess::WhiteningTransform<f64>;
pub type VladVector = vlad::VladVector<f64>;
pub type SpmEncoding = spm::SpmEncoding<f64>;
pub type LinearModel = classifier::LinearModel<f64>;
pub type Encoder = encoder::Encoder<f64>;
pub type Matrix = matrix::RowMatrix<f64>;

pub type DictionaryF32 = codebook::Dictionary<f32>;
pub type WhiteningTransformF32 = preprocess::WhiteningTransform<f32>;
pub type VladVectorF32 = vlad::VladVector<f32>;
pub type LinearModelF32 = classifier::LinearModel<f32>;
pub type EncoderF32 = encoder::Encoder<f32>;
