//! Writer-variability modeling for offline signature augmentation.
//!
//! The toolkit optimizes the parameters that govern intrapersonal (writer)
//! variability for two augmenters — a sinusoidal image-space duplicator and a
//! Gaussian-filter feature-space perturbation — by minimizing the absolute
//! silhouette index between genuine and synthetic clusters with a particle
//! swarm, then evaluates the augmented data through a writer-dependent
//! verification pipeline (skew-weighted RBF-SVM, Equal Error Rate).
//!
//! Module map:
//!
//! * [`metrics`] — Euclidean dissimilarity, silhouette chain, cohesion.
//! * [`swarm`] — the PSO minimizer and parameter-vector types.
//! * [`augment`] — feature-space (Gaussian filter) and image-space
//!   (sinusoidal duplicator) synthetic-sample generation.
//! * [`preprocess`] — Otsu segmentation and the normalization pipeline.
//! * [`features`] — extractor contract, baseline grid descriptor, vector
//!   store I/O for precomputed CNN vectors.
//! * [`verify`] — skew-weighted RBF-SVM trained per writer.
//! * [`evaluate`] — EER and the repetition protocol.
//! * [`orchestrate`] — per-writer optimization and parameter persistence.
//! * [`ingest`] — dataset manifests, prepared datasets, split selection.
//! * [`synth`] — generator for the bundled synthetic stroke dataset.
//! * [`defaults`] — shipped parameter vectors and reference constants.

pub mod augment;
pub mod defaults;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod orchestrate;
pub mod preprocess;
pub mod raster;
pub mod swarm;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
