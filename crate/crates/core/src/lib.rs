//! Gameplay video bug detection.
//!
//! Videos are cut into caption-aligned segments of at least five seconds, each
//! segment is described by a bag-of-visual-words TF-IDF vector over its frame
//! embeddings plus a transcript embedding, and binary classifiers decide which
//! segments show a bug. Per-video bug statistics are compared across genres.

pub mod analytics;
pub mod classify;
pub mod codebook;
pub mod config;
pub mod embedding;
pub mod error;
pub mod pipeline;
pub mod segmentation;
pub mod seeds;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
