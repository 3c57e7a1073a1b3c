//! Sharpness-aware minimization with adaptive adversarial cross-entropy
//! (AACE) perturbations, on a small self-contained reverse-mode autodiff core.
//!
//! - [`autodiff`]: define-by-run tape with a stop-gradient primitive.
//! - [`model`]: MLP classifier and the flat parameter registry.
//! - [`loss`]: softmax, one-hot and AACE cross-entropy.
//! - [`optim`]: perturbation strategies, the two-pass step, SGD, LR schedule.
//! - [`data`]: synthetic datasets, CSV input, splits and batching.
//! - [`experiment`]: config-driven runs, ρ grids, comparisons, telemetry and charts.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod model;
pub mod optim;

pub use error::{Error, Result};
