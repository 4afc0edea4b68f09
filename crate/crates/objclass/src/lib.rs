//! Object-based classification of multispectral raster imagery.
//!
//! The crate builds a full classification pipeline: synthetic scene
//! generation with known ground truth, region-growing segmentation,
//! composite spectral/spatial kernels, a soft-margin SVM trained by SMO
//! with Platt-calibrated posteriors, a support vector random field refined
//! by ICM, cellular-automata label relaxation, genetic-algorithm
//! hyperparameter selection, five classical reference classifiers and
//! confusion-matrix accuracy assessment.

pub mod baselines;
pub mod ca;
pub mod config;
pub mod error;
pub mod eval;
pub mod ga;
pub mod kernel;
pub mod pipeline;
pub mod raster;
pub mod segment;
pub mod svm;
pub mod svrf;
pub mod synth;

pub use error::{Error, Result};
