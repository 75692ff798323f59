//! Scoring, target alignment and subset selection for image-text embedding
//! pools, plus a synthetic linear-model lab for the contrastive theory behind
//! them.

pub mod dynamic;
pub mod embeddings;
pub mod error;
pub mod files;
pub mod kernels;
pub mod quality;
pub mod rng;
pub mod scores;
pub mod select;
pub mod stats;
pub mod target;
pub mod theory;

pub use error::{Error, Result};
