//! Synthetic-sample generation in feature space (Gaussian filter) and image
//! space (sinusoidal duplicator).

pub mod feature;
pub mod image;
