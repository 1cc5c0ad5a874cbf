//! Physical-layer spoofing detection from RSS feature vectors.
//!
//! Frames from a sequence are compared pairwise by a learned position-change
//! detector, the "same location" decisions form a graph over the frames, and
//! a message-passing graph network turns that graph into a spoofing
//! statistic. Clustering-based detectors and a Monte Carlo harness are
//! included for comparison.

pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod ingest;
pub mod neural;
pub mod pcd;
pub mod pipeline;
pub mod rng;
pub mod survey;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
