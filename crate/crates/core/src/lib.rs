//! Classify volumetric scans by sampling high-entropy slices and combining
//! pluggable base classifiers.
//!
//! The pipeline stages map onto the modules below:
//!
//! - [`volume`]: single-file NIfTI-1 parsing/writing and slice extraction
//! - [`entropy`]: per-slice Shannon entropy scoring and the three sampling
//!   regimes (single max-entropy slice, top-k, all)
//! - [`preprocess`]: bilinear resizing and per-slice normalization
//! - [`learner`]: a built-in linear softmax classifier plus ingestion of
//!   external prediction files
//! - [`ensemble`]: top-k model selection, perceptron stacking, and
//!   majority voting with the all-distinct-to-CN tie rule
//! - [`metrics`]: confusion matrices, per-class/macro metrics, and
//!   one-vs-all ROC/AUC
//! - [`dataset`]: stratified scan-level splitting and synthetic volume
//!   generation for self-contained runs

pub mod dataset;
pub mod ensemble;
pub mod entropy;
pub mod format;
pub mod learner;
pub mod metrics;
pub mod preprocess;
pub mod volume;

pub use learner::Label;
