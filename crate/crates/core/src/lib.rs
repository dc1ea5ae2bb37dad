//! Cohesive-convergence analysis of SGD training.
//!
//! A model is trained to convergence, then stepped further at a small
//! learning rate. For every consecutive pair of checkpoints the per-sample
//! losses of a compact training set A and a compact test set B either rise
//! or fall; a pair `(a, b)` whose losses move together scores `+1`, a pair
//! moving apart scores `-1`. Accumulated over many pairs these scores give
//! the cohesive degree used to classify B from the labels of A and to find
//! groups of samples that converge together.

pub mod analysis;
pub mod checkpoint;
pub mod cohesion;
pub mod dataset;
pub mod error;
pub mod model;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
