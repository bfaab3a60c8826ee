//! Calibration toolkit for ordinal multi-class classifiers.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: logit/probability batch types, stable softmax, top-1 extraction.
//! * [`rng`]: the seeded, splittable randomness contract.
//! * [`losses`]: cross entropy, focal, MDCA, the ordinal class-index loss and
//!   their weighted composite, each with an analytic gradient w.r.t. the logits.
//! * [`metrics`]: equal-width confidence binning, ECE, MCE, reliability rows.
//! * [`temperature`]: post-hoc temperature scaling fitted by golden-section search.
//! * [`trainer`]: a small softmax-regression / one-hidden-layer classifier,
//!   SGD with momentum, and the finite-difference gradient checker.
//! * [`data`]: synthetic ordinal Gaussian data, label remapping, splitting and
//!   the logits/labels text formats.

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod rng;
pub mod temperature;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{log_softmax, softmax, top1, LabelVector, LogitBatch, Matrix, ProbBatch};
pub use rng::RngSeed;
