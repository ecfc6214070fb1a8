//! Pipeline for binary VPN detection from packet captures.
//!
//! The stages, in order:
//!
//! 1. [`pcap`] — parse classic pcap files into per-packet records
//!    (transport payload sizes, first-fragment policy).
//! 2. [`flow`] — assemble bidirectional flows keyed on the 5-tuple,
//!    either complete or split at an active timeout, and filter short
//!    flows.
//! 3. [`wavelet`] / [`features`] — decompose each direction's packet-size
//!    sequence with a discrete wavelet transform and compute per-level
//!    energy, magnitude, spread and entropy features.
//! 4. [`models`] — train random forest, neural network and linear SVM
//!    classifiers on the feature vectors.
//! 5. [`eval`] — metrics, confusion matrices and per-category
//!    misclassification breakdowns.
//!
//! [`synth`] generates seeded synthetic captures and feature sets with
//! known ground truth; [`experiment`] wires the stages into reproducible
//! experiment bundles.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod flow;
pub mod models;
pub mod pcap;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};
pub(crate) mod tableio;
