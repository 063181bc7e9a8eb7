//! Crow-search hyperparameter tuning for iterative tomographic
//! reconstruction.
//!
//! The crate pairs a discrete crow-search optimizer with a small 2D
//! parallel-beam reconstruction testbed and a no-reference image-quality
//! fitness, so reconstruction parameters can be tuned without ground truth.

pub mod cli;
pub mod config;
pub mod eval;
pub mod experiment;
pub mod fitness;
pub mod image;
pub mod init;
pub mod io;
pub mod optimizer;
pub mod param_space;
pub mod phantoms;
pub mod recon;

pub use fitness::{FitnessConfig, FitnessReport, ObjectiveVector};
pub use image::{Image2D, Sinogram};
pub use init::{ChaosStream, InitScheme};
pub use optimizer::{Algorithm, OptimizerConfig, RunRecord};
pub use param_space::{ParameterSpace, ParameterSpec, Position, ReconAlgorithm};
