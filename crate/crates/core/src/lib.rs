//! Feature learning against fixed unit-norm class anchors.
//!
//! The crate trains small networks so that their feature outputs cluster
//! around one predefined anchor direction per class, under either a euclidean
//! or a cosine metric. Fixing the class centers up front — instead of
//! estimating them from the data like classic nearest-class-mean pipelines —
//! makes the classifier geometry a design choice: anchors can be placed
//! maximally far apart and never move during training.
//!
//! Module map:
//! - [`linalg`]: dense row-major f64 matrices and the handful of BLAS-like
//!   kernels everything else is built on.
//! - [`metrics`]: euclidean and cosine distances with analytic gradients.
//! - [`anchors`]: anchor constructions (polar, orthonormal basis, repulsion),
//!   validation, checksums and CSV persistence.
//! - [`ncm`]: anchored posteriors, the batch loss and its feature gradient,
//!   classifiers, and the softmax baseline head.
//! - [`network`]: small dense/conv networks with hand-written backprop.
//! - [`optim`]: SGD with momentum and weight decay, plus the plateau
//!   learning-rate schedule.
//! - [`train`]: the epoch loop tying data, network, loss and optimizer
//!   together, with CSV logging.
//! - [`data`]: datasets, IDX image files, normalization, augmentation and
//!   synthetic generators.
//! - [`checkpoint`]: binary model serialization.

pub mod anchors;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod ncm;
pub mod network;
pub mod optim;
pub mod presets;
pub mod train;

pub use error::{Error, Result};
