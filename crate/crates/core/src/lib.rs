//! Attention-based temporal graph convolutional network for per-cell
//! dead/alive classification over short video-as-graph sequences, with a
//! deterministic training stack and gradient-check verification.

pub mod data;
pub mod diffmath;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod training;

pub use error::{Error, Result};
